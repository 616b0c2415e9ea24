"""Compact device models: armchair GNRFET (top-of-barrier ballistic) and a
unified-interpolation short-channel MOSFET.

All voltages are in volts, lengths in nanometres, capacitances in farads and
currents in amperes. Energies of subband edges are in eV, which makes them
numerically equal to the corresponding potentials in volts.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import constants as sc

Q = sc.e
K_B = sc.k
H_PLANCK = sc.h
EPS0 = sc.epsilon_0

D_CC_NM = 0.142
HOPPING_EV = 2.7
EPS_OX_REL = 3.9
EDGE_CAP_FRACTION = 0.05
DEFAULT_SUBBANDS = 4
DEFAULT_TEMPERATURE = 300.0


def thermal_voltage(temperature: float = DEFAULT_TEMPERATURE) -> float:
    return K_B * temperature / Q


class DeviceModelError(ValueError):
    pass


class InvalidGeometryError(DeviceModelError):
    pass


class SolverFailure(DeviceModelError, RuntimeError):
    pass


class Polarity(str, enum.Enum):
    N = "N"
    P = "P"

    @property
    def sign(self) -> float:
        return 1.0 if self is Polarity.N else -1.0


class Chirality(str, enum.Enum):
    METALLIC = "Metallic"
    SEMICONDUCTING = "Semiconducting"


@dataclass(frozen=True)
class GnrGeometry:
    """Physical parameters of one GNRFET instance.

    Defaults are the 16 nm device characterised in the evaluation
    (N = 12, six ribbons, 2 nm ribbon spacing).
    """

    n_dimer: int = 12
    n_rib: int = 6
    w_sp: float = 2.0
    l_ch: float = 16.0
    l_res: float = 16.0
    t_ox_top: float = 0.95
    t_ox_sub: float = 20.0
    f_dop: float = 0.001
    polarity: Polarity = Polarity.N

    def __post_init__(self):
        if int(self.n_dimer) != self.n_dimer or self.n_dimer < 3:
            raise InvalidGeometryError(f"n_dimer must be an integer >= 3, got {self.n_dimer}")
        if int(self.n_rib) != self.n_rib or self.n_rib < 1:
            raise InvalidGeometryError(f"n_rib must be an integer >= 1, got {self.n_rib}")
        # w_sp == 0 is accepted: a single ribbon with no spacing is a valid
        # degenerate layout (W_G == W_CH).
        if self.w_sp < 0:
            raise InvalidGeometryError("w_sp must be >= 0")
        for name in ("l_ch", "l_res", "t_ox_top", "t_ox_sub"):
            if not getattr(self, name) > 0:
                raise InvalidGeometryError(f"{name} must be > 0")
        if not 0.0 < self.f_dop < 1.0:
            raise InvalidGeometryError("f_dop must lie in (0, 1)")
        object.__setattr__(self, "polarity", Polarity(self.polarity))

    @property
    def w_ch(self) -> float:
        return gnr_channel_width(self.n_dimer)

    @property
    def w_g(self) -> float:
        return gnr_gate_width(self)

    @property
    def ribbon_pitch(self) -> float:
        """Gate width contributed by one ribbon."""
        return 2.0 * self.w_sp + self.w_ch

    def with_(self, **changes) -> GnrGeometry:
        return replace(self, **changes)


@dataclass(frozen=True)
class SubbandSpectrum:
    energies: tuple[float, ...]
    hopping_energy: float = HOPPING_EV

    def __post_init__(self):
        e = tuple(float(x) for x in self.energies)
        if not e:
            raise DeviceModelError("spectrum needs at least one subband")
        if any(x < 0 for x in e) or list(e) != sorted(e):
            raise DeviceModelError("subband energies must be non-negative and ascending")
        object.__setattr__(self, "energies", e)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.energies)


@dataclass(frozen=True)
class GnrCapSet:
    c_g_ch: float
    c_sub_ch: float
    c_ch_d: float
    c_ch_s: float

    def __post_init__(self):
        if min(self.c_g_ch, self.c_sub_ch, self.c_ch_d, self.c_ch_s) <= 0:
            raise DeviceModelError("all coupling capacitances must be positive")

    @property
    def total(self) -> float:
        return self.c_g_ch + self.c_sub_ch + self.c_ch_d + self.c_ch_s


@dataclass(frozen=True)
class BiasPoint:
    v_g: float = 0.0
    v_d: float = 0.0
    v_s: float = 0.0
    v_sub: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.v_g, self.v_d, self.v_s, self.v_sub)):
            raise DeviceModelError("bias voltages must be finite")


@dataclass(frozen=True)
class MosParams:
    """Parameters of the interpolated (EKV-style) MOSFET stand-in.

    ``i_spec`` is the specific current per square; use :func:`calibrate_i_spec`
    to derive it from a target on-current.
    """

    polarity: Polarity = Polarity.N
    v_th: float = 0.47965
    t_ox: float = 0.95
    width: float = 33.6
    length: float = 16.0
    subthreshold_ideality: float = 2.0
    i_spec: float = 1e-6
    thermal_voltage: float = field(default_factory=thermal_voltage)

    def __post_init__(self):
        object.__setattr__(self, "polarity", Polarity(self.polarity))
        if not (self.width > 0 and self.length > 0):
            raise DeviceModelError("MOS width and length must be > 0")
        if self.subthreshold_ideality < 1:
            raise DeviceModelError("subthreshold ideality must be >= 1")
        if self.i_spec <= 0 or self.thermal_voltage <= 0:
            raise DeviceModelError("i_spec and thermal voltage must be > 0")

    def with_(self, **changes) -> MosParams:
        return replace(self, **changes)


# --------------------------------------------------------------------------
# geometry and band structure


def gnr_channel_width(n_dimer: int) -> float:
    """Ribbon width in nm for an armchair ribbon with ``n_dimer`` dimer lines."""
    if n_dimer < 3:
        raise InvalidGeometryError(f"n_dimer must be >= 3, got {n_dimer}")
    return (n_dimer + 1) * math.sqrt(3.0) * D_CC_NM / 2.0


def gnr_gate_width(geom: GnrGeometry) -> float:
    return (2.0 * geom.w_sp + gnr_channel_width(geom.n_dimer)) * geom.n_rib


def subband_energies(geom: GnrGeometry | int, count: int = DEFAULT_SUBBANDS,
                     hopping: float = HOPPING_EV) -> SubbandSpectrum:
    """Lowest ``count`` subband edges from nearest-neighbour tight binding,
    eps_p = |t| |1 + 2 cos(p pi / (N + 1))| for p = 1..N.
    """
    n = geom if isinstance(geom, int) else geom.n_dimer
    if n < 3:
        raise InvalidGeometryError(f"n_dimer must be >= 3, got {n}")
    if count < 1:
        raise DeviceModelError("count must be >= 1")
    p = np.arange(1, n + 1)
    # p == 2(N+1)/3 hits the zero of 1 + 2cos exactly; evaluate that case
    # symbolically so metallic ribbons give an exact 0.
    e = np.abs(hopping) * np.abs(1.0 + 2.0 * np.cos(p * np.pi / (n + 1)))
    e[3 * p == 2 * (n + 1)] = 0.0
    return SubbandSpectrum(tuple(np.sort(e)[:count]), abs(hopping))


def classify_chirality(n_dimer: int) -> Chirality:
    if n_dimer < 3:
        raise InvalidGeometryError(f"n_dimer must be >= 3, got {n_dimer}")
    return Chirality.METALLIC if n_dimer % 3 == 2 else Chirality.SEMICONDUCTING


def gnr_capacitances(geom: GnrGeometry) -> GnrCapSet:
    """Parallel-plate estimates for the four channel coupling capacitors."""
    area = geom.w_g * 1e-9 * geom.l_ch * 1e-9
    eps_ox = EPS_OX_REL * EPS0
    c_g = eps_ox * area / (geom.t_ox_top * 1e-9)
    c_sub = eps_ox * area / (geom.t_ox_sub * 1e-9)
    c_edge = EDGE_CAP_FRACTION * c_g
    return GnrCapSet(c_g, c_sub, c_edge, c_edge)


# --------------------------------------------------------------------------
# GNRFET electrostatics and transport


def _ln1pexp(x):
    return np.logaddexp(0.0, x)


def _logistic(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass(frozen=True)
class GnrDevice:
    """Everything needed to evaluate one GNRFET: geometry plus the derived
    spectrum, capacitances and channel state-density constant."""

    geom: GnrGeometry
    spectrum: SubbandSpectrum
    caps: GnrCapSet
    n0: float
    temperature: float = DEFAULT_TEMPERATURE

    @classmethod
    def build(cls, geom: GnrGeometry, n0_per_ribbon: float = 1.0,
              subbands: int = DEFAULT_SUBBANDS,
              temperature: float = DEFAULT_TEMPERATURE) -> GnrDevice:
        return cls(geom, subband_energies(geom, subbands), gnr_capacitances(geom),
                   n0_per_ribbon * geom.n_rib, temperature)


def _charge_terms(psi, v_s, v_d, eps, phi_t):
    """Per-subband occupancy kernels from source and drain, plus the
    flat-band reference, shaped (..., n_subbands)."""
    eps = np.asarray(eps)
    xs = (psi[..., None] - v_s[..., None] - eps) / phi_t
    xd = (psi[..., None] - v_d[..., None] - eps) / phi_t
    x0 = -eps / phi_t
    return xs, xd, x0


def channel_charge_residual(psi, cg, csub, cd, cs, n0, eps, v_g, v_d, v_s, v_sub, phi_t):
    """F(psi) = Q_CAP(psi) - Q_CH(psi) and dF/dpsi, broadcast over arrays."""
    xs, xd, x0 = _charge_terms(psi, v_s, v_d, eps, phi_t)
    # drain and source terms are grouped so swapping them is exact in floating point
    q_cap = cg * (v_g - psi) + csub * (v_sub - psi) + (cd * (v_d - psi) + cs * (v_s - psi))
    occ = _ln1pexp(xs) + _ln1pexp(xd) - 2.0 * _ln1pexp(x0)
    q_ch = Q * n0 * occ.sum(axis=-1)
    d_occ = (_logistic(xs) + _logistic(xd)).sum(axis=-1) / phi_t
    dfdpsi = -(cg + csub + cd + cs) - Q * n0 * d_occ
    return q_cap - q_ch, dfdpsi


def solve_psi_batch(cg, csub, cd, cs, n0, eps, v_g, v_d, v_s, v_sub, phi_t,
                    tol: float = 1e-21, max_bisect: int = 200,
                    bisect_width: float = 1e-4, newton_steps: int = 3, max_polish: int = 60):
    """Vectorised channel-potential solve for N-polarity devices.

    Bisection narrows every bracket to ``bisect_width`` volts, then at least
    ``newton_steps`` safeguarded Newton steps polish the root (at most
    ``max_polish``; a step leaving the bracket falls back to its midpoint). Raises
    :class:`SolverFailure` when any residual stays above ``tol``.
    """
    v_g, v_d, v_s, v_sub = np.broadcast_arrays(*(np.asarray(v, dtype=float)
                                                 for v in (v_g, v_d, v_s, v_sub)))
    shape = v_g.shape
    args = [np.broadcast_to(np.asarray(a, dtype=float), shape) for a in (cg, csub, cd, cs, n0)]
    eps = np.broadcast_to(np.asarray(eps, dtype=float), shape + (np.shape(eps)[-1],))
    cg, csub, cd, cs, n0 = args

    def resid(p):
        return channel_charge_residual(p, cg, csub, cd, cs, n0, eps, v_g, v_d, v_s, v_sub, phi_t)

    terminals = np.stack([v_g, v_d, v_s, v_sub])
    lo = terminals.min(axis=0) - 2.0
    hi = terminals.max(axis=0) + 2.0
    f_lo, _ = resid(lo)
    f_hi, _ = resid(hi)
    if np.any(f_lo <= 0) or np.any(f_hi >= 0):
        raise SolverFailure("channel potential is not bracketed")

    steps = 0
    while np.any(hi - lo > bisect_width):
        if steps >= max_bisect:
            raise SolverFailure(f"bisection did not converge in {max_bisect} steps")
        mid = 0.5 * (lo + hi)
        f_mid, _ = resid(mid)
        lo = np.where(f_mid >= 0, mid, lo)
        hi = np.where(f_mid <= 0, mid, hi)
        steps += 1

    psi = 0.5 * (lo + hi)
    best, f_best = psi, np.full(shape, np.inf)
    for k in range(max(max_polish, newton_steps)):
        f, df = resid(psi)
        better = np.abs(f) < np.abs(f_best)
        best, f_best = np.where(better, psi, best), np.where(better, f, f_best)
        # shrink the bracket first (F is strictly decreasing), then keep the
        # Newton iterate inside it
        lo = np.where(f > 0, psi, lo)
        hi = np.where(f < 0, psi, hi)
        step = f / df
        new = psi - step
        new = np.where((new < lo) | (new > hi), 0.5 * (lo + hi), new)
        psi = np.where(f == 0, psi, new)
        if k + 1 >= newton_steps and np.all(np.abs(step) <= 4e-16 * np.maximum(1.0, np.abs(psi))):
            break
    f, _ = resid(psi)
    better = np.abs(f) < np.abs(f_best)
    psi, f = np.where(better, psi, best), np.where(better, f, f_best)
    if not np.all(np.abs(f) < tol):
        raise SolverFailure(f"channel-charge residual {np.max(np.abs(f)):.3e} C above {tol:.1e} C")
    return psi


def gnr_current_kernel(psi, v_d, v_s, eps, n_rib, phi_t):
    """Landauer current for N-polarity devices; broadcasts like the solver."""
    xs, xd, _ = _charge_terms(np.asarray(psi, float), np.asarray(v_s, float),
                              np.asarray(v_d, float), eps, phi_t)
    g0 = 2.0 * Q * (Q * phi_t) / H_PLANCK
    return n_rib * g0 * (_ln1pexp(xs) - _ln1pexp(xd)).sum(axis=-1)


def solve_channel_potential(geom: GnrGeometry, caps: GnrCapSet, spectrum: SubbandSpectrum,
                            bias: BiasPoint, n0: float | None = None,
                            temperature: float = DEFAULT_TEMPERATURE) -> float:
    """Self-consistent channel potential Psi_CH (volts).

    For P-polarity devices the solve runs on negated terminal voltages and the
    returned potential is negated back.
    """
    if n0 is None:
        n0 = 1.0 * geom.n_rib
    s = geom.polarity.sign
    phi_t = thermal_voltage(temperature)
    psi = solve_psi_batch(caps.c_g_ch, caps.c_sub_ch, caps.c_ch_d, caps.c_ch_s, n0,
                          spectrum.array, s * bias.v_g, s * bias.v_d, s * bias.v_s,
                          s * bias.v_sub, phi_t)
    return float(s * psi)


def gnr_ids(spectrum: SubbandSpectrum, psi_ch: float, bias: BiasPoint, n_rib: int,
            polarity: Polarity = Polarity.N, temperature: float = DEFAULT_TEMPERATURE) -> float:
    """Drain-to-source current from the channel potential.

    ``psi_ch`` is the value returned by :func:`solve_channel_potential` for
    the same device and bias (already in the device's own sign convention).
    """
    s = Polarity(polarity).sign
    phi_t = thermal_voltage(temperature)
    i = gnr_current_kernel(s * psi_ch, s * bias.v_d, s * bias.v_s, spectrum.array, n_rib, phi_t)
    return float(s * i)


def gnr_device_current(dev: GnrDevice, bias: BiasPoint) -> float:
    psi = solve_channel_potential(dev.geom, dev.caps, dev.spectrum, bias, dev.n0, dev.temperature)
    return gnr_ids(dev.spectrum, psi, bias, dev.geom.n_rib, dev.geom.polarity, dev.temperature)


# --------------------------------------------------------------------------
# MOSFET


def mos_current_kernel(v_gs, v_ds, v_th, n, phi_t, beta):
    """N-polarity current; ``beta`` = i_spec * W / L. Source/drain symmetric:
    for v_ds < 0 the terminals swap roles so the drain factor stays bounded."""
    v_gs = np.asarray(v_gs, dtype=float)
    v_ds = np.asarray(v_ds, dtype=float)
    fwd = v_ds >= 0
    v_gx = np.where(fwd, v_gs, v_gs - v_ds)
    a = np.abs(v_ds)
    drive = _ln1pexp((v_gx - v_th) / (2.0 * n * phi_t)) ** 2
    mag = beta * drive * -np.expm1(-a / phi_t)
    return np.where(fwd, mag, -mag)


def mos_ids(params: MosParams, bias: BiasPoint) -> float:
    s = params.polarity.sign
    v_gs = s * (bias.v_g - bias.v_s)
    v_ds = s * (bias.v_d - bias.v_s)
    beta = params.i_spec * params.width / params.length
    i = mos_current_kernel(v_gs, v_ds, s * params.v_th, params.subthreshold_ideality,
                           params.thermal_voltage, beta)
    return float(s * i)


def calibrate_i_spec(params: MosParams, i_on: float, v_on: float) -> float:
    """Specific current that makes ``params`` deliver ``i_on`` at |V_GS| = |V_DS| = v_on."""
    probe = params.with_(i_spec=1.0)
    s = params.polarity.sign
    unit = abs(mos_ids(probe, BiasPoint(v_g=s * v_on, v_d=s * v_on)))
    return i_on / unit


@dataclass(frozen=True)
class MosPair:
    """Module NMOS/PMOS pair with uniform sizing (PMOS at ``p_width_ratio`` x)."""

    nmos: MosParams
    pmos: MosParams

    @classmethod
    def default(cls, n_width: float = 33.6, p_width_ratio: float = 2.0,
                ideality: float = 2.0, i_on: float = 10e-6, v_on: float = 0.7,
                vth_n: float = 0.47965, vth_p: float = -0.43121,
                temperature: float = DEFAULT_TEMPERATURE) -> MosPair:
        phi_t = thermal_voltage(temperature)
        n = MosParams(Polarity.N, vth_n, 0.95, n_width, 16.0, ideality, 1.0, phi_t)
        p = MosParams(Polarity.P, vth_p, 1.0, p_width_ratio * n_width, 16.0, ideality, 1.0, phi_t)
        n = n.with_(i_spec=calibrate_i_spec(n, i_on, v_on))
        # balanced inverter: the wider PMOS delivers the same on-current
        p = p.with_(i_spec=calibrate_i_spec(p, i_on, v_on))
        return cls(n, p)
