"""Nonlinear nodal analysis over :class:`~gnrpg.circuit.Circuit` values.

Unknowns are the voltages of every node that is neither ground nor held by
a source. Static device currents and node charges are evaluated in
vectorised batches per device family; their Jacobians come from central
finite differences. Transient analysis integrates the charge form
dq/dt + f(v) = 0 with a fixed step.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .circuit import (Capacitor, Circuit, CurrentSource, Gnrfet, Mosfet, Resistor, Switch,
                      VoltageSource)
from .device_models import (Q, SolverFailure, _ln1pexp, mos_current_kernel, gnr_current_kernel,
                            solve_psi_batch, thermal_voltage)


class SimulationError(RuntimeError):
    pass


class DcFailure(SimulationError):
    def __init__(self, message: str, worst_node: str | None = None, residual: float = math.nan):
        super().__init__(message)
        self.worst_node = worst_node
        self.residual = residual


class TransientFailure(SimulationError):
    def __init__(self, message: str, time: float):
        super().__init__(message)
        self.time = time


class NoCrossingError(SimulationError):
    pass


class Integration(str, enum.Enum):
    BACKWARD_EULER = "BackwardEuler"
    TRAPEZOIDAL = "Trapezoidal"


@dataclass(frozen=True)
class SimConfig:
    abstol: float = 1e-12
    reltol: float = 1e-6
    max_newton_iters: int = 100
    dt: float = 1e-12
    t_end: float = 1e-9
    integration: Integration = Integration.TRAPEZOIDAL
    gmin: float = 1e-12
    fd_step: float = 1e-6
    max_update: float = 0.2
    source_steps: int = 10
    polish_iters: int = 2

    def __post_init__(self):
        object.__setattr__(self, "integration", Integration(self.integration))
        for name in ("abstol", "reltol", "dt", "t_end"):
            if not getattr(self, name) > 0:
                raise ValueError(f"SimConfig.{name} must be > 0")
        if self.gmin < 0 or self.max_newton_iters < 1:
            raise ValueError("gmin must be >= 0 and max_newton_iters >= 1")


@dataclass(frozen=True)
class Waveform:
    """Uniformly sampled signal; ``node`` is a node name or ``I(<node>)`` for
    the current a source delivers into the circuit."""

    node: str
    t: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if t.shape != v.shape or t.ndim != 1 or t.size == 0:
            raise ValueError("waveform needs matching 1-D time and value arrays")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("waveform times must be strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "v", v)

    @property
    def samples(self) -> list[tuple[float, float]]:
        return list(zip(self.t.tolist(), self.v.tolist()))

    def at(self, time: float) -> float:
        return float(np.interp(time, self.t, self.v))


@dataclass(frozen=True)
class Stimulus:
    """Piecewise-linear schedules for source nodes; values hold past the ends."""

    schedules: tuple[tuple[str, tuple[tuple[float, float], ...]], ...] = ()

    def __post_init__(self):
        norm = []
        for node, pts in self.schedules:
            pts = tuple((float(t), float(v)) for t, v in pts)
            if not pts:
                raise ValueError(f"empty schedule for {node!r}")
            ts = [t for t, _ in pts]
            if any(b < a for a, b in zip(ts, ts[1:])):
                raise ValueError(f"schedule times for {node!r} must be non-decreasing")
            norm.append((node, pts))
        object.__setattr__(self, "schedules", tuple(norm))

    @classmethod
    def from_dict(cls, sched: dict) -> Stimulus:
        return cls(tuple((k, tuple(v)) for k, v in sched.items()))

    def nodes(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.schedules)

    def value(self, node: str, t: float) -> float:
        for n, pts in self.schedules:
            if n == node:
                return _pwl(pts, t)
        raise KeyError(node)


def _pwl(pts, t):
    if t <= pts[0][0]:
        return pts[0][1]
    for (t0, v0), (t1, v1) in zip(pts, pts[1:]):
        if t < t1:
            return v0 if t1 == t0 else v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    return pts[-1][1]


def step_schedule(v0: float, v1: float, t_edge: float, rise: float) -> tuple[tuple[float, float], ...]:
    return ((0.0, v0), (t_edge, v0), (t_edge + rise, v1))


# --------------------------------------------------------------------------
# compiled circuit


class Simulator:
    """A circuit compiled into index arrays. Owns no mutable state between
    calls; one instance serves any number of DC and transient runs."""

    def __init__(self, circuit: Circuit, cfg: SimConfig | None = None):
        self.circuit = circuit
        self.cfg = cfg or SimConfig()
        c = circuit
        self.nodes = list(c.nodes)
        self.index = {n: i for i, n in enumerate(self.nodes)}
        n_all = len(self.nodes)
        self.n_all = n_all
        self.sources = {d.node: d for d in c.devices if isinstance(d, VoltageSource)}
        fixed = np.zeros(n_all, dtype=bool)
        fixed[self.index[c.ground_ref]] = True
        for n in self.sources:
            fixed[self.index[n]] = True
        self.fixed = fixed
        self.free = np.flatnonzero(~fixed)
        self.free_pos = np.full(n_all, -1)
        self.free_pos[self.free] = np.arange(self.free.size)
        self.source_nodes = list(self.sources)
        self.source_idx = np.array([self.index[n] for n in self.source_nodes], dtype=int)
        ix = self.index

        mos = [d for d in c.devices if isinstance(d, Mosfet)]
        self.m_term = np.array([[ix[d.drain], ix[d.gate], ix[d.source]] for d in mos], dtype=int).reshape(-1, 3).T
        self.m_sign = np.array([d.params.polarity.sign for d in mos])
        self.m_vth = np.array([d.params.polarity.sign * d.params.v_th for d in mos])
        self.m_n = np.array([d.params.subthreshold_ideality for d in mos])
        self.m_phi = np.array([d.params.thermal_voltage for d in mos])
        self.m_beta = np.array([d.params.i_spec * d.params.width / d.params.length * d.multiplier
                                for d in mos])

        gnr = [d for d in c.devices if isinstance(d, Gnrfet)]
        self.g_term = np.array([[ix[d.drain], ix[d.gate], ix[d.source], ix[d.sub]] for d in gnr],
                               dtype=int).reshape(-1, 4).T
        self.g_sign = np.array([d.device.geom.polarity.sign for d in gnr])
        caps = np.array([[d.device.caps.c_g_ch, d.device.caps.c_sub_ch, d.device.caps.c_ch_d,
                          d.device.caps.c_ch_s] for d in gnr]).reshape(-1, 4)
        self.g_cg, self.g_csub, self.g_cd, self.g_cs = caps.T
        self.g_n0 = np.array([d.device.n0 for d in gnr])
        self.g_nrib = np.array([d.device.geom.n_rib for d in gnr], dtype=float)
        temps = {d.device.temperature for d in gnr}
        if len(temps) > 1:
            raise SimulationError("all GNRFETs in one circuit must share a temperature")
        self.g_phi = thermal_voltage(temps.pop()) if temps else thermal_voltage()
        nsub = max((len(d.device.spectrum.energies) for d in gnr), default=1)
        # pad short spectra with edges far above any bias so they contribute nothing
        eps = np.full((len(gnr), nsub), 50.0)
        for i, d in enumerate(gnr):
            eps[i, :len(d.device.spectrum.energies)] = d.device.spectrum.energies
        self.g_eps = eps

        rows, cols, vals = [], [], []
        for d in c.devices:
            if isinstance(d, Resistor):
                a, b, g = ix[d.a], ix[d.b], 1.0 / d.value
                rows += [a, a, b, b]; cols += [a, b, a, b]; vals += [g, -g, -g, g]
        self.G = sp.csr_matrix((vals, (rows, cols)), shape=(n_all, n_all))
        rows, cols, vals = [], [], []
        for d in c.devices:
            if isinstance(d, Capacitor):
                a, b, v = ix[d.a], ix[d.b], d.value
                rows += [a, a, b, b]; cols += [a, b, a, b]; vals += [v, -v, -v, v]
        self.C = sp.csr_matrix((vals, (rows, cols)), shape=(n_all, n_all))
        sw = [d for d in c.devices if isinstance(d, Switch)]
        self.s_term = np.array([[ix[d.a], ix[d.b], ix[d.ctrl]] for d in sw], dtype=int).reshape(-1, 3).T
        self.s_gon = np.array([1.0 / d.r_on for d in sw])
        self.s_goff = np.array([1.0 / d.r_off for d in sw])
        self.s_vth = np.array([d.v_threshold for d in sw])
        self.i_inj = np.zeros(n_all)
        for d in c.devices:
            if isinstance(d, CurrentSource):
                self.i_inj[ix[d.a]] -= d.value
                self.i_inj[ix[d.b]] += d.value

        # nodes that store charge; the rest are algebraic constraints
        dyn = np.zeros(n_all, dtype=bool)
        dyn[np.unique(self.C.nonzero()[0])] = True
        if gnr:
            dyn[np.unique(self.g_term)] = True
        self.dynamic = dyn

        self._build_pattern()

    # -- stamp pattern

    def _build_pattern(self):
        """Row/column index arrays for every Jacobian entry, fixed per circuit."""
        r, c = [], []
        md = self.m_term[0] if self.m_term.size else np.zeros(0, int)
        ms = self.m_term[2] if self.m_term.size else np.zeros(0, int)
        for k in range(3):
            col = self.m_term[k] if self.m_term.size else np.zeros(0, int)
            r += [md, ms]; c += [col, col]
        self._n_mos_stamps = sum(x.size for x in r)
        if self.g_term.size:
            gd, gg, gs, gb = self.g_term
            for k in range(4):
                r += [gd, gs]; c += [self.g_term[k], self.g_term[k]]
        self._n_ids_stamps = sum(x.size for x in r)
        if self.s_term.size:
            sa, sb, _ = self.s_term
            r += [sa, sa, sb, sb]; c += [sa, sb, sa, sb]
        self._f_rows = np.concatenate(r) if r else np.zeros(0, int)
        self._f_cols = np.concatenate(c) if c else np.zeros(0, int)
        qr, qc = [], []
        if self.g_term.size:
            for a in range(4):
                for k in range(4):
                    qr.append(self.g_term[a]); qc.append(self.g_term[k])
        self._q_rows = np.concatenate(qr) if qr else np.zeros(0, int)
        self._q_cols = np.concatenate(qc) if qc else np.zeros(0, int)
        nf = self.free.size
        fp = self.free_pos
        eye = sp.identity(nf, format="csr")
        self._G_ff = self.G[self.free][:, self.free]
        self._C_ff = self.C[self.free][:, self.free]
        self._eye = eye

        def restrict(rows, cols):
            keep = (fp[rows] >= 0) & (fp[cols] >= 0)
            return keep, fp[rows[keep]], fp[cols[keep]]

        self._f_keep, self._f_r, self._f_c = restrict(self._f_rows, self._f_cols)
        self._q_keep, self._q_r, self._q_c = restrict(self._q_rows, self._q_cols)

    # -- device evaluation

    def _mos_currents(self, T):
        """T: (..., 3, n_mos) terminal voltages (d, g, s) -> drain currents."""
        s = self.m_sign
        vd, vg, vs = T[..., 0, :], T[..., 1, :], T[..., 2, :]
        return s * mos_current_kernel(s * (vg - vs), s * (vd - vs), self.m_vth, self.m_n,
                                      self.m_phi, self.m_beta)

    def _gnr_state(self, T):
        """T: (..., 4, n_gnr) voltages (d, g, s, sub) -> (current, terminal charges (..., 4, n))."""
        s = self.g_sign
        vd, vg, vs, vb = (s * T[..., k, :] for k in range(4))
        try:
            psi = solve_psi_batch(self.g_cg, self.g_csub, self.g_cd, self.g_cs, self.g_n0,
                                  self.g_eps, vg, vd, vs, vb, self.g_phi)
        except SolverFailure as exc:
            raise SimulationError(f"GNRFET channel solve failed: {exc}") from exc
        ids = gnr_current_kernel(psi, vd, vs, self.g_eps, self.g_nrib, self.g_phi)
        xs = (psi[..., None] - vs[..., None] - self.g_eps) / self.g_phi
        xd = (psi[..., None] - vd[..., None] - self.g_eps) / self.g_phi
        x0 = -self.g_eps / self.g_phi
        q_ch = Q * self.g_n0 * (_ln1pexp(xs) + _ln1pexp(xd) - 2.0 * _ln1pexp(x0)).sum(axis=-1)
        qd = self.g_cd * (vd - psi) - 0.5 * q_ch
        qg = self.g_cg * (vg - psi)
        qs = self.g_cs * (vs - psi) - 0.5 * q_ch
        qb = self.g_csub * (vb - psi)
        q = np.stack([qd, qg, qs, qb], axis=-2)
        return s * ids, s * q

    @staticmethod
    def _perturbed(T, h):
        """Stack the base point and +-h on each terminal: (1 + 2k, k, n)."""
        k = T.shape[0]
        X = np.repeat(T[None], 1 + 2 * k, axis=0)
        for j in range(k):
            X[1 + 2 * j, j] += h
            X[2 + 2 * j, j] -= h
        return X

    def evaluate(self, V, jacobian: bool = True, charges: bool = False):
        """Static node currents f (leaving each node), optionally node charges q
        and the free-node Jacobian blocks (df/dv, dq/dv)."""
        h = self.cfg.fd_step
        f = self.G @ V - self.i_inj
        vals = []
        if self.m_term.size:
            T = V[self.m_term]
            if jacobian:
                I = self._mos_currents(self._perturbed(T, h))
                ids = I[0]
                for k in range(3):
                    dk = (I[1 + 2 * k] - I[2 + 2 * k]) / (2 * h)
                    vals += [dk, -dk]
            else:
                ids = self._mos_currents(T)
            np.add.at(f, self.m_term[0], ids)
            np.add.at(f, self.m_term[2], -ids)
        q = self.C @ V if charges else None
        qvals = []
        if self.g_term.size:
            T = V[self.g_term]
            need_fd = jacobian
            X = self._perturbed(T, h) if need_fd else T[None]
            I, Qt = self._gnr_state(X)
            ids = I[0]
            np.add.at(f, self.g_term[0], ids)
            np.add.at(f, self.g_term[2], -ids)
            if charges:
                for a in range(4):
                    np.add.at(q, self.g_term[a], Qt[0, a])
            if jacobian:
                for k in range(4):
                    dk = (I[1 + 2 * k] - I[2 + 2 * k]) / (2 * h)
                    vals += [dk, -dk]
                if charges:
                    for a in range(4):
                        for k in range(4):
                            qvals.append((Qt[1 + 2 * k, a] - Qt[2 + 2 * k, a]) / (2 * h))
        if self.s_term.size:
            sa, sb, sc = self.s_term
            g = np.where(V[sc] > self.s_vth, self.s_gon, self.s_goff)
            i = g * (V[sa] - V[sb])
            np.add.at(f, sa, i)
            np.add.at(f, sb, -i)
            if jacobian:
                vals += [g, -g, -g, g]
        if not jacobian:
            return f, q, None, None
        nf = self.free.size
        fv = np.concatenate(vals) if vals else np.zeros(0)
        Jf = sp.csc_matrix((fv[self._f_keep], (self._f_r, self._f_c)), shape=(nf, nf)) + self._G_ff
        Jq = None
        if charges:
            qv = np.concatenate(qvals) if qvals else np.zeros(0)
            Jq = sp.csc_matrix((qv[self._q_keep], (self._q_r, self._q_c)), shape=(nf, nf)) + self._C_ff
        return f, q, Jf, Jq

    # -- helpers

    def full_vector(self, values: dict[str, float] | None = None, default: float = 0.0) -> np.ndarray:
        V = np.full(self.n_all, float(default))
        V[self.index[self.circuit.ground_ref]] = 0.0
        if values:
            for n, v in values.items():
                if n in self.index:
                    V[self.index[n]] = v
        for n, src in self.sources.items():
            V[self.index[n]] = src.value
        return V

    def apply_sources(self, V, values: dict[str, float]):
        for n, v in values.items():
            V[self.index[n]] = v

    def source_values(self, stim: Stimulus | None, t: float,
                      base: dict[str, float] | None = None) -> dict[str, float]:
        """Source voltages at time ``t``: stimulus values where given, else
        ``base``, else the circuit's own source values."""
        out = {n: s.value for n, s in self.sources.items()}
        if base:
            out.update(base)
        if stim is not None:
            for n in stim.nodes():
                if n not in self.sources:
                    raise SimulationError(f"stimulus node {n!r} is not held by a voltage source")
                out[n] = stim.value(n, t)
        return out

    def kcl_residual(self, V) -> np.ndarray:
        """Static KCL residual on free nodes (amperes)."""
        f, _, _, _ = self.evaluate(V, jacobian=False)
        return f[self.free]

    def source_currents(self, V) -> dict[str, float]:
        """DC current each source delivers into the circuit."""
        f, _, _, _ = self.evaluate(V, jacobian=False)
        return {n: float(f[self.index[n]]) for n in self.source_nodes}

    # -- Newton core

    def _newton(self, V, residual, jac, max_iters, what, polish=0):
        """Damped Newton on residual(V) = 0 over free nodes, in place.

        Steps are scaled so no node moves more than ``max_update`` and halved while they increase the
        residual norm. ``polish`` extra iterations run after convergence.
        ``residual`` must leave the matching Jacobian available via ``jac``.
        """
        cfg = self.cfg
        free = self.free
        if free.size == 0:
            return 0
        remaining = None
        r = residual(V)
        J = jac()
        for it in range(max_iters):
            try:
                dx = splu(J.tocsc()).solve(-r)
            except RuntimeError as exc:
                raise DcFailure(f"{what}: singular Jacobian ({exc})") from None
            if not np.all(np.isfinite(dx)):
                break
            big = np.max(np.abs(dx))
            if big > cfg.max_update:
                dx *= cfg.max_update / big
            norm0 = np.linalg.norm(r)
            lam = 1.0
            for _ in range(8):
                Vt = V.copy()
                Vt[free] += lam * dx
                rt = residual(Vt)
                if (np.all(np.isfinite(rt)) and np.linalg.norm(rt) <= norm0) or norm0 < cfg.abstol:
                    break
                lam *= 0.5
            if not np.all(np.isfinite(rt)):
                break
            V[:] = Vt
            step = lam * dx
            r = rt
            J = jac()
            if remaining is not None:
                remaining -= 1
                if remaining <= 0:
                    return it + 1
                continue
            ok = (np.max(np.abs(r)) < cfg.abstol and
                  np.all(np.abs(step) <= cfg.reltol * np.abs(V[free]) + 1e-9))
            if ok:
                if polish == 0:
                    return it + 1
                remaining = polish
        if remaining is not None:
            return max_iters
        r = residual(V)
        worst = int(np.argmax(np.abs(r)))
        raise DcFailure(f"{what} did not converge (worst residual {abs(r[worst]):.3e} A "
                        f"at node {self.nodes[free[worst]]!r})", self.nodes[free[worst]],
                        float(abs(r[worst])))

    def _dc_solve(self, V, gmin_resid: float):
        # the matrix shunt matches the residual one, floored only to keep it
        # non-singular; a larger matrix-only shunt stalls Newton on nodes whose
        # conductance is below gmin (stacks of off transistors)
        g = max(gmin_resid, 1e-18)
        state = {}

        def residual(x):
            f, _, Jf, _ = self.evaluate(x, jacobian=True)
            state["J"] = Jf + g * self._eye
            return f[self.free] + gmin_resid * x[self.free]

        return self._newton(V, residual, lambda: state["J"], self.cfg.max_newton_iters, "DC solve",
                            polish=self.cfg.polish_iters)

    def dc(self, guess: dict[str, float] | None = None, sources: dict[str, float] | None = None,
           default: float = 0.0) -> np.ndarray:
        """DC operating point as a full node-voltage vector.

        Newton first runs with gmin conductances to ground, then re-converges
        without them so the answer is the gmin-free solution. When the direct
        solve fails, gmin stepping (large shunts relaxed by decades), a
        pseudo-transient march and source stepping are tried in turn."""
        targets = {n: s.value for n, s in self.sources.items()}
        if sources:
            targets.update(sources)
        start = self.full_vector(guess, default)
        self.apply_sources(start, targets)
        last = None
        for attempt in (self._dc_direct, self._dc_gmin_stepping, self._dc_pseudo_transient,
                        self._dc_source_stepping):
            V = start.copy()
            try:
                attempt(V, targets)
                self._dc_solve(V, 0.0)
                return V
            except (DcFailure, SimulationError, FloatingPointError) as exc:
                last = exc
        raise DcFailure(f"DC operating point failed after gmin and source stepping: {last}",
                        getattr(last, "worst_node", None), getattr(last, "residual", math.nan))

    def _dc_direct(self, V, targets):
        self._dc_solve(V, self.cfg.gmin)

    def _dc_gmin_stepping(self, V, targets):
        g = 1e-3
        while g > self.cfg.gmin:
            self._dc_solve(V, g)
            g *= 0.1
        self._dc_solve(V, self.cfg.gmin)

    def _dc_pseudo_transient(self, V, targets, c_node=1e-15, h0=1e-13, h_end=1e-3):
        """March fictitious node capacitors to steady state with growing
        backward-Euler steps; once ``c_node / h`` is below gmin the state is a
        DC point."""
        g = self.cfg.gmin
        free = self.free
        h = h0
        state = {}
        while h < h_end:
            V_old = V[free].copy()

            def residual(x, h=h, V_old=V_old):
                f, _, Jf, _ = self.evaluate(x, jacobian=True)
                state["J"] = Jf + (g + c_node / h) * self._eye
                return f[free] + g * x[free] + c_node * (x[free] - V_old) / h

            try:
                self._newton(V, residual, lambda: state["J"], 30, "pseudo-transient step")
            except DcFailure:
                V[free] = V_old
                h *= 0.25
                if h < 1e-18:
                    raise
                continue
            h *= 2.0

    def _dc_source_stepping(self, V, targets):
        V[:] = self.full_vector(None, 0.0)
        for k in range(1, self.cfg.source_steps + 1):
            a = k / self.cfg.source_steps
            self.apply_sources(V, {n: a * v for n, v in targets.items()})
            self._dc_solve(V, self.cfg.gmin)

    def gmin_shift(self, guess: dict[str, float] | None = None,
                   sources: dict[str, float] | None = None, default: float = 0.0) -> float:
        """Largest node-voltage change between the gmin-free DC solution and
        the one re-converged with gmin conductances loaded."""
        V = self.dc(guess, sources, default)
        loaded = V.copy()
        self._dc_solve(loaded, self.cfg.gmin)
        return float(np.max(np.abs(V - loaded)))

    def transient(self, stim: Stimulus | None = None, probes: Sequence[str] = (),
                  guess: dict[str, float] | None = None, until: Callable | None = None,
                  initial: np.ndarray | None = None, sources: dict[str, float] | None = None):
        """Fixed-step integration from the DC point at the t = 0 stimulus values.

        Sources without a stimulus hold the values in ``sources``; when
        ``initial`` is given they hold their voltages in that state instead.

        Probe names may be node names or ``I(<source node>)``; current samples
        are the source current averaged over each step. ``until(t, v)`` may stop
        the run early, with ``v`` mapping node names to voltages.
        Returns ``(times, {probe: samples})``.
        """
        cfg = self.cfg
        trap = cfg.integration is Integration.TRAPEZOIDAL
        n_steps = int(round(cfg.t_end / cfg.dt))
        if n_steps < 1:
            raise SimulationError("t_end must be at least one time step")
        held = dict(sources or {})
        if initial is None:
            V = self.dc(guess, self.source_values(stim, 0.0, held))
        else:
            V = np.array(initial, dtype=float)
            held = {n: float(V[self.index[n]]) for n in self.sources} | held
            self.apply_sources(V, self.source_values(stim, 0.0, held))
        node_probes, cur_probes = [], []
        for p in probes:
            if p.startswith("I(") and p.endswith(")"):
                if p[2:-1] not in self.sources:
                    raise SimulationError(f"current probe {p!r} needs a voltage source node")
                cur_probes.append(p)
            elif p in self.index:
                node_probes.append(p)
            else:
                raise SimulationError(f"unknown probe node {p!r}")
        nidx = np.array([self.index[p] for p in node_probes], dtype=int)
        cidx = np.array([self.index[p[2:-1]] for p in cur_probes], dtype=int)
        times = [0.0]
        f0, q0, _, _ = self.evaluate(V, jacobian=False, charges=True)
        rec_v = [V[nidx].copy()]
        rec_i = [f0[cidx].copy()]
        free = self.free
        dynf = self.dynamic[free]
        V_prev = V.copy()
        lookup = _NodeView(self.index)

        for k in range(1, n_steps + 1):
            t1 = k * cfg.dt
            V_new, f1, q1 = self._step(V, f0, q0, V_prev, t1 - cfg.dt, cfg.dt, stim, held, trap,
                                       dynf)
            if trap:
                i_src = (q1[cidx] - q0[cidx]) / cfg.dt + 0.5 * (f0[cidx] + f1[cidx])
            else:
                i_src = (q1[cidx] - q0[cidx]) / cfg.dt + f1[cidx]
            V_prev, V = V, V_new
            f0, q0 = f1, q1
            times.append(t1)
            rec_v.append(V[nidx].copy())
            rec_i.append(i_src)
            if until is not None and until(t1, lookup.bind(V)):
                break
        t = np.array(times)
        out = {}
        arr_v = np.array(rec_v).reshape(len(times), -1)
        arr_i = np.array(rec_i).reshape(len(times), -1)
        for j, p in enumerate(node_probes):
            out[p] = arr_v[:, j]
        for j, p in enumerate(cur_probes):
            out[p] = arr_i[:, j]
        return t, out

    def _step(self, V0, f0, q0, V_prev, t0, dt, stim, held, trap, dynf, depth=0):
        """One implicit step of length dt from state (V0, f0, q0)."""
        V = V0.copy()
        self.apply_sources(V, self.source_values(stim, t0 + dt, held))
        if depth == 0 and t0 > 0:
            # linear predictor on free nodes
            V[self.free] = V0[self.free] + np.clip(V0[self.free] - V_prev[self.free], -0.05, 0.05)
        free = self.free
        theta = 0.5 if trap else 1.0
        f0_free = f0[free]
        q0_free = q0[free]
        state = {}

        def residual(x):
            f, q, Jf, Jq = self.evaluate(x, jacobian=True, charges=True)
            state.update(f=f, q=q)
            # algebraic nodes get the plain KCL equation
            r = np.where(dynf, (q[free] - q0_free) / dt + theta * f[free] + (1 - theta) * f0_free,
                         f[free])
            scale = np.where(dynf, theta, 1.0)
            state["J"] = Jq / dt + sp.diags(scale) @ Jf + 1e-18 * self._eye
            return r

        try:
            self._newton(V, residual, lambda: state["J"], self.cfg.max_newton_iters,
                         f"transient step at t={t0 + dt:.4e}s")
        except (DcFailure, SimulationError) as exc:
            if depth >= 2:
                raise TransientFailure(f"transient step failed at t={t0 + dt:.4e} s: {exc}",
                                       t0 + dt) from None
            # retry the interval as four sub-steps
            Vs, fs, qs, Vp = V0, f0, q0, V_prev
            h = dt / 4
            for j in range(4):
                Vn, fs, qs = self._step(Vs, fs, qs, Vp, t0 + j * h, h, stim, held, trap, dynf,
                                        depth + 1)
                Vp, Vs = Vs, Vn
            return Vs, fs, qs
        f, q, _, _ = self.evaluate(V, jacobian=False, charges=True)
        return V, f, q


class _NodeView:
    def __init__(self, index):
        self.index = index
        self.V = None

    def bind(self, V):
        self.V = V
        return self

    def __getitem__(self, node):
        return float(self.V[self.index[node]])


# --------------------------------------------------------------------------
# functional interface


def dc_operating_point(c: Circuit, cfg: SimConfig | None = None,
                       guess: dict[str, float] | None = None) -> dict[str, float]:
    sim = Simulator(c, cfg)
    V = sim.dc(guess)
    return {n: float(V[i]) for n, i in sim.index.items()}


def kcl_residuals(c: Circuit, voltages: dict[str, float]) -> dict[str, float]:
    """Static KCL mismatch at every free node for a given voltage map."""
    sim = Simulator(c)
    V = sim.full_vector(voltages)
    r = sim.kcl_residual(V)
    return {sim.nodes[i]: float(x) for i, x in zip(sim.free, r)}


def transient(c: Circuit, stim: Stimulus | None, cfg: SimConfig | None, probes: Iterable[str],
              guess: dict[str, float] | None = None, until: Callable | None = None,
              sources: dict[str, float] | None = None) -> list[Waveform]:
    """Run a transient and return one waveform per probe."""
    sim = Simulator(c, cfg)
    probes = list(probes)
    t, data = sim.transient(stim, probes, guess=guess, until=until, sources=sources)
    return [Waveform(p, t, data[p]) for p in probes]


# --------------------------------------------------------------------------
# measurements


def first_crossing(wf: Waveform, v_ref: float, t_start: float = 0.0,
                   direction: int = 0) -> float:
    """Time of the first crossing of ``v_ref`` at or after ``t_start``,
    linearly interpolated. ``direction`` +1/-1 restricts to rising/falling."""
    t, v = wf.t, wf.v
    d = v - v_ref
    for k in range(len(t) - 1):
        if t[k + 1] < t_start:
            continue
        a, b = d[k], d[k + 1]
        if direction > 0 and not b > a:
            continue
        if direction < 0 and not b < a:
            continue
        if a == 0.0 and t[k] >= t_start:
            return float(t[k])
        if a * b < 0 or b == 0.0:
            tc = t[k] + (t[k + 1] - t[k]) * a / (a - b)
            if tc >= t_start:
                return float(tc)
    raise NoCrossingError(f"{wf.node} never crosses {v_ref:.4g} V after t={t_start:.4g} s")


def measure_delay(wfs: Sequence[Waveform], in_node: str, out_node: str, v_ref: float,
                  t_start: float = 0.0) -> float:
    by = {w.node: w for w in wfs}
    for n in (in_node, out_node):
        if n not in by:
            raise SimulationError(f"no waveform for {n!r}")
    t_in = first_crossing(by[in_node], v_ref, t_start)
    t_out = first_crossing(by[out_node], v_ref, t_start)
    return t_out - t_in


def write_waveforms_csv(path, wfs: Sequence[Waveform], header_lines: Sequence[str] = ()):
    """CSV with ``time_s,<node>...`` columns; all waveforms must share a time base."""
    if not wfs:
        raise ValueError("no waveforms to write")
    t = wfs[0].t
    for w in wfs[1:]:
        if w.t.shape != t.shape or not np.array_equal(w.t, t):
            raise ValueError("waveforms must share one time base")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        wr = csv.writer(fh)
        wr.writerow(["time_s"] + [w.node for w in wfs])
        for k in range(t.size):
            wr.writerow([repr(float(t[k]))] + [repr(float(w.v[k])) for w in wfs])
