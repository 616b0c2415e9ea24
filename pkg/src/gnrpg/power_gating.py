"""Footer power switches, mode control tables and the four power-gating
metrics: standby leakage, active delay (with active power), wake-up time
and power-delay product.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .circuit import GND, VDD, VGNR, Capacitor, Circuit, CircuitError, Gnrfet, Mosfet, VoltageSource
from .circuit_sim import (SimConfig, SimulationError, Simulator, Stimulus,
                          Waveform, first_crossing, measure_delay, step_schedule)
from .device_models import (Chirality, GnrDevice, GnrGeometry, MosPair, classify_chirality)
from .netlist import GateKind, Netlist, evaluate, expand_to_transistors, total_nmos_width


class PowerGatingError(ValueError):
    pass


class SizingError(PowerGatingError):
    pass


class WakeupTimeout(SimulationError):
    pass


class PgKind(str, enum.Enum):
    NO_GATING = "NoGating"
    MOSPG = "MOSPG"
    GMCPG_SS = "GMCPG_SS"
    GMCPG_NS = "GMCPG_NS"
    TM_GMCPG = "TM_GMCPG"
    QM_GMCPG = "QM_GMCPG"


class PgMode(str, enum.Enum):
    ACTIVE = "Active"
    NAP = "Nap"
    SLUMBER = "Slumber"
    SLEEP = "Sleep"


MODES_BY_KIND = {
    PgKind.NO_GATING: (PgMode.ACTIVE,),
    PgKind.MOSPG: (PgMode.ACTIVE, PgMode.SLEEP),
    PgKind.GMCPG_SS: (PgMode.ACTIVE, PgMode.SLEEP),
    PgKind.GMCPG_NS: (PgMode.ACTIVE, PgMode.SLEEP),
    PgKind.TM_GMCPG: (PgMode.ACTIVE, PgMode.NAP, PgMode.SLEEP),
    PgKind.QM_GMCPG: (PgMode.ACTIVE, PgMode.NAP, PgMode.SLUMBER, PgMode.SLEEP),
}


@dataclass(frozen=True)
class PgStructure:
    kind: PgKind
    switch_size_ratio: float | None = None
    ns_switch_count: int = 4
    qm_dimer_pair: tuple[int, int] = (15, 9)

    def __post_init__(self):
        object.__setattr__(self, "kind", PgKind(self.kind))
        if self.switch_size_ratio is None:
            default = 0.10 if self.kind is PgKind.MOSPG else 0.01
            object.__setattr__(self, "switch_size_ratio", default)
        if not 0 < self.switch_size_ratio <= 1:
            raise PowerGatingError("switch_size_ratio must lie in (0, 1]")
        if self.ns_switch_count < 2 or self.ns_switch_count % 2:
            raise PowerGatingError("ns_switch_count must be an even number >= 2")
        n1, n2 = (int(x) for x in self.qm_dimer_pair)
        object.__setattr__(self, "qm_dimer_pair", (n1, n2))
        if self.kind in (PgKind.TM_GMCPG, PgKind.QM_GMCPG):
            if not n1 > n2:
                raise PowerGatingError(f"QM dimer pair needs N1 > N2, got {(n1, n2)}")
            for n in (n1, n2):
                if classify_chirality(n) is not Chirality.SEMICONDUCTING:
                    raise PowerGatingError(f"QM switch dimer count {n} is metallic")

    @property
    def modes(self) -> tuple[PgMode, ...]:
        return MODES_BY_KIND[self.kind]


@dataclass(frozen=True)
class QmControls:
    nps: int
    sls: int
    sps: int

    def __post_init__(self):
        if (self.nps, self.sls, self.sps) not in _QM_TABLE.values():
            raise PowerGatingError(f"invalid control encoding {(self.nps, self.sls, self.sps)}")

    @property
    def mode(self) -> PgMode:
        return next(m for m, row in _QM_TABLE.items() if row == (self.nps, self.sls, self.sps))


# mode truth table: (NPS, SLS, SPS)
_QM_TABLE = {
    PgMode.ACTIVE: (0, 0, 1),
    PgMode.NAP: (1, 0, 0),
    PgMode.SLUMBER: (0, 1, 0),
    PgMode.SLEEP: (0, 0, 0),
}


def qm_mode_controls(mode: PgMode) -> QmControls:
    return QmControls(*_QM_TABLE[PgMode(mode)])


@dataclass(frozen=True)
class DeviceLibrary:
    """Switch and module device choices used when attaching footers."""

    gnr_base: GnrGeometry = field(default_factory=GnrGeometry)
    n0_per_ribbon: float = 1.0
    subbands: int = 4
    temperature: float = 300.0
    mos: MosPair = field(default_factory=MosPair.default)
    mospg_vth_offset: float = 0.15
    switch_vdd: float = 0.35
    back_gate_fraction: float = 0.2
    vgnr_cap_per_nm: float = 1e-17
    ns_stagger: float = 0.0

    def gnr(self, **geom) -> GnrDevice:
        return GnrDevice.build(self.gnr_base.with_(**geom), self.n0_per_ribbon, self.subbands,
                               self.temperature)


def ribbons_for_width(width_nm: float, geom: GnrGeometry) -> int:
    if not width_nm > 0:
        raise SizingError(f"switch target width {width_nm} nm is not positive")
    return max(1, math.ceil(width_nm / geom.ribbon_pitch - 1e-9))


def attach_footer(c: Circuit, pg: PgStructure, lib: DeviceLibrary | None = None,
                  geom_override: dict | None = None) -> Circuit:
    """Connect ``VGNR`` to ground through the footer of ``pg``.

    Control nodes are held by sources at their Active values; the mode table
    stored on the returned circuit lists the control voltages of every mode.
    ``geom_override`` replaces GNR geometry fields of the main switch
    (an explicit ``n_rib`` bypasses the sizing rule).
    """
    lib = lib or DeviceLibrary()
    if c.footer is not None:
        raise CircuitError(f"circuit {c.name!r} already has a {c.footer} footer")
    kind = pg.kind
    if kind is PgKind.NO_GATING:
        return c.with_devices([VoltageSource("V.VGNR", VGNR, 0.0)], footer=kind.value,
                              mode_controls=((PgMode.ACTIVE.value, ()),))
    w_mod = total_nmos_width(c)
    target = pg.switch_size_ratio * w_mod
    if not target > 0:
        raise SizingError(f"module {c.name!r} has no NMOS width to size a footer against")
    devs: list = []
    if lib.vgnr_cap_per_nm > 0:
        devs.append(Capacitor("C.VGNR", VGNR, GND, lib.vgnr_cap_per_nm * w_mod))
    on, bg = lib.switch_vdd, lib.back_gate_fraction * c.vcc
    override = dict(geom_override or {})

    def main_gnr(width, **extra):
        g = lib.gnr_base.with_(**{k: v for k, v in override.items() if k != "n_rib"}, **extra)
        n_rib = override.get("n_rib") or ribbons_for_width(width, g)
        return GnrDevice.build(g.with_(n_rib=int(n_rib)), lib.n0_per_ribbon, lib.subbands,
                               lib.temperature)

    gates: list[str] = []
    if kind is PgKind.MOSPG:
        p = lib.mos.nmos.with_(v_th=lib.mos.nmos.v_th + lib.mospg_vth_offset, width=target)
        devs.append(Mosfet("M.SW", VGNR, "SLP", GND, GND, p, is_switch=True))
        gates = ["SLP"]
        table = {PgMode.ACTIVE: {"SLP": on}, PgMode.SLEEP: {"SLP": 0.0}}
    elif kind is PgKind.GMCPG_SS:
        devs.append(Gnrfet("G.SW", VGNR, "SLP", GND, GND, main_gnr(target)))
        gates = ["SLP"]
        table = {PgMode.ACTIVE: {"SLP": on}, PgMode.SLEEP: {"SLP": 0.0}}
    elif kind is PgKind.GMCPG_NS:
        # branches of two series switches in parallel; each switch carries the
        # single-switch sizing so the on-resistance matches GMCPG_SS
        dev = main_gnr(target)
        for b in range(pg.ns_switch_count // 2):
            mid = f"VGNR~ns{b}"
            g_top, g_bot = f"SLP{2 * b}", f"SLP{2 * b + 1}"
            devs.append(Gnrfet(f"G.SW{2 * b}", VGNR, g_top, mid, GND, dev))
            devs.append(Gnrfet(f"G.SW{2 * b + 1}", mid, g_bot, GND, GND, dev))
            gates += [g_top, g_bot]
        table = {PgMode.ACTIVE: {g: on for g in gates}, PgMode.SLEEP: {g: 0.0 for g in gates}}
    elif kind in (PgKind.TM_GMCPG, PgKind.QM_GMCPG):
        n1, n2 = pg.qm_dimer_pair
        devs.append(Gnrfet("G.ST0", VGNR, "G0", GND, GND, main_gnr(target)))
        side = target / 4
        devs.append(Gnrfet("G.ST1", VGNR, "G1", GND, "BG1", main_gnr(side, n_dimer=n1)))
        gates = ["G0", "G1"]
        if kind is PgKind.QM_GMCPG:
            devs.append(Gnrfet("G.ST2", VGNR, "G2", GND, "BG2", main_gnr(side, n_dimer=n2)))
            gates.append("G2")
        table = {}
        for mode in pg.modes:
            ctl = qm_mode_controls(mode)
            row = {g: ctl.sps * on for g in gates}
            row["BG1"] = ctl.nps * bg
            if kind is PgKind.QM_GMCPG:
                row["BG2"] = ctl.sls * bg
            table[mode] = row
    else:  # pragma: no cover - PgKind is closed
        raise PowerGatingError(f"unknown structure {kind}")
    active = table[PgMode.ACTIVE]
    devs += [VoltageSource(f"V.{n}", n, v) for n, v in active.items()]
    controls = tuple((m.value, tuple(sorted(row.items()))) for m, row in table.items())
    delays = ()
    if kind is PgKind.GMCPG_NS and lib.ns_stagger > 0:
        delays = tuple((g, i * lib.ns_stagger) for i, g in enumerate(gates))
    notes = c.notes + (("switch_gates", tuple(gates)), ("control_delays", delays),
                       ("switch_target_width_nm", target))
    return c.with_devices(devs, footer=kind.value, mode_controls=controls, notes=notes)


def switch_devices(c: Circuit) -> list:
    return [d for d in c.devices if getattr(d, "is_switch", False)]


# --------------------------------------------------------------------------
# gated modules


@dataclass(frozen=True)
class GatedModule:
    """A netlist with its expanded, footer-equipped circuit."""

    netlist: Netlist
    circuit: Circuit
    structure: PgStructure

    @property
    def vcc(self) -> float:
        return self.circuit.vcc


def build_module(nl: Netlist, pg: PgStructure, lib: DeviceLibrary | None = None,
                 vcc: float = 0.7, c_load: float = 0.1e-15,
                 geom_override: dict | None = None) -> GatedModule:
    lib = lib or DeviceLibrary()
    c = expand_to_transistors(nl, lib.mos, c_load=c_load, vcc=vcc)
    return GatedModule(nl, attach_footer(c, pg, lib, geom_override), pg)


def check_mode(c: Circuit, mode: PgMode) -> PgMode:
    mode = PgMode(mode)
    if mode.value not in c.modes:
        raise PowerGatingError(f"mode {mode.value} is not available for {c.footer}")
    return mode


def _internal_logic(nl: Netlist, values: dict, vcc: float, low: float) -> dict[str, float]:
    """Node-voltage guess from logic values, including the expander's
    internal nodes (compound-gate intermediates and series-stack nodes)."""
    guess = {}
    for s, v in values.items():
        guess[s] = vcc if bool(v) else low
    for g in nl.gates:
        out = g.output
        ins = [bool(values[f]) for f in g.fanins]
        if g.kind in (GateKind.AND, GateKind.OR, GateKind.XNOR):
            guess[f"{out}~i"] = low if bool(values[out]) else vcc
        if g.kind is GateKind.BUFF:
            guess[f"{out}~b"] = low if bool(values[out]) else vcc
        if g.kind in (GateKind.XOR, GateKind.XNOR):
            acc = ins[0]
            for j, b in enumerate(ins[1:], start=1):
                m = not (acc and b)
                p, q = not (acc and m), not (b and m)
                acc = acc != b
                name = out if (j == len(ins) - 1 and g.kind is GateKind.XOR) else (
                    f"{out}~i" if j == len(ins) - 1 else f"{out}~x{j}")
                for tag, val in (("m", m), ("p", p), ("q", q)):
                    guess[f"{name}~{tag}"] = vcc if val else low
    return guess


def initial_guess(m: GatedModule, inputs: Sequence[int], mode: PgMode) -> dict[str, float]:
    """Logic-level starting point for Newton. In power-saving modes the
    virtual ground and every low node start near the supply."""
    vals = evaluate(m.netlist, dict(zip(m.netlist.inputs, (bool(b) for b in inputs))))
    vcc = m.vcc
    low = 0.0 if mode is PgMode.ACTIVE or m.circuit.footer == PgKind.NO_GATING.value else 0.98 * vcc
    guess = _internal_logic(m.netlist, vals, vcc, low)
    guess[VGNR] = low
    sim_nodes = set(m.circuit.nodes)
    for n in sim_nodes:
        if n not in guess and "~" in n:
            guess[n] = vcc if "~p" in n[n.rfind("~"):] else low
    return guess


def _sources_for(m: GatedModule, mode: PgMode, inputs: Sequence[int]) -> dict[str, float]:
    src = dict(m.circuit.controls_for(mode.value))
    for name, b in zip(m.netlist.inputs, inputs):
        src[name] = m.vcc if b else 0.0
    return src


def dc_state(m: GatedModule, mode: PgMode, inputs: Sequence[int], cfg: SimConfig | None = None,
             sim: Simulator | None = None) -> tuple[Simulator, np.ndarray]:
    mode = check_mode(m.circuit, mode)
    if len(inputs) != len(m.netlist.inputs):
        raise PowerGatingError(f"expected {len(m.netlist.inputs)} input bits, got {len(inputs)}")
    sim = sim or Simulator(m.circuit, cfg)
    V = sim.dc(initial_guess(m, inputs, mode), _sources_for(m, mode, inputs))
    return sim, V


def leakage_vectors(n_inputs: int, seed: int, n_random: int = 8) -> list[tuple[int, ...]]:
    """All-zeros, all-ones, then ``n_random`` seeded pseudo-random vectors."""
    rng = np.random.default_rng(seed)
    vecs = [(0,) * n_inputs, (1,) * n_inputs]
    for _ in range(n_random):
        vecs.append(tuple(int(b) for b in rng.integers(0, 2, n_inputs)))
    return vecs


def measure_leakage(m: GatedModule, mode: PgMode, inputs: Sequence[int],
                    cfg: SimConfig | None = None, sim: Simulator | None = None) -> float:
    """V_cc times the supply current at the DC point of ``mode``."""
    sim, V = dc_state(m, mode, inputs, cfg, sim)
    return m.vcc * abs(sim.source_currents(V)[VDD])


def mean_leakage(m: GatedModule, mode: PgMode, vectors: Sequence[Sequence[int]],
                 cfg: SimConfig | None = None) -> float:
    sim = Simulator(m.circuit, cfg)
    return float(np.mean([measure_leakage(m, mode, v, cfg, sim) for v in vectors]))


def vgnr_level(m: GatedModule, mode: PgMode, inputs: Sequence[int],
               cfg: SimConfig | None = None) -> float:
    sim, V = dc_state(m, mode, inputs, cfg)
    return float(V[sim.index[VGNR]])


def measure_wakeup(m: GatedModule, from_mode: PgMode, cfg: SimConfig, threshold: float = 0.05,
                   inputs: Sequence[int] | None = None, t_max: float | None = None) -> float:
    """Time for VGNR to fall to ``threshold`` x V_cc after Active controls are
    applied at t = 0, starting from the DC point of ``from_mode``.
    ``cfg.dt`` sets the step; the run stops at the crossing or ``t_max``."""
    from_mode = check_mode(m.circuit, from_mode)
    inputs = tuple(inputs) if inputs is not None else (0,) * len(m.netlist.inputs)
    if m.circuit.footer == PgKind.NO_GATING.value:
        return 0.0
    v_thr = threshold * m.vcc
    t_max = t_max or cfg.t_end
    sim = Simulator(m.circuit, replace(cfg, t_end=t_max))
    _, V0 = dc_state(m, from_mode, inputs, cfg, sim)
    if V0[sim.index[VGNR]] <= v_thr:
        return 0.0
    start = m.circuit.controls_for(from_mode.value)
    active = m.circuit.controls_for(PgMode.ACTIVE.value)
    delays = dict(m.circuit.note("control_delays", ()))
    sched = {}
    for node, v in active.items():
        d = delays.get(node, 0.0)
        sched[node] = ((0.0, start[node]), (d, start[node]), (d + cfg.dt, v))
    stim = Stimulus.from_dict(sched)
    t, data = sim.transient(stim, [VGNR], initial=V0,
                            until=lambda t, v: v[VGNR] <= v_thr)
    wf = Waveform(VGNR, t, data[VGNR])
    if wf.v[-1] > v_thr:
        raise WakeupTimeout(f"VGNR still at {wf.v[-1]:.4f} V after {t[-1]:.3e} s")
    return first_crossing(wf, v_thr, 0.0, direction=-1)


# --------------------------------------------------------------------------
# active-mode delay and power


def logic_depth(nl: Netlist) -> dict[str, int]:
    depth = {s: 0 for s in nl.inputs}
    for g in nl.topo_order:
        depth[g.output] = 1 + max(depth[f] for f in g.fanins)
    return depth


@dataclass(frozen=True)
class PathStimulus:
    vector: tuple[int, ...]
    input: str
    output: str


def find_sensitized_path(nl: Netlist, seed: int, trials: int = 16) -> PathStimulus:
    """Seeded search for an input flip that toggles an output; among the
    candidates found, the deepest output wins (ties by declaration order)."""
    rng = np.random.default_rng(seed)
    depth = logic_depth(nl)
    best = None
    for _ in range(trials):
        vec = tuple(int(b) for b in rng.integers(0, 2, len(nl.inputs)))
        base = evaluate(nl, dict(zip(nl.inputs, map(bool, vec))))
        for i, name in enumerate(nl.inputs):
            flipped = list(vec)
            flipped[i] ^= 1
            after = evaluate(nl, dict(zip(nl.inputs, map(bool, flipped))))
            for o in nl.outputs:
                if bool(after[o]) != bool(base[o]):
                    cand = (depth[o], PathStimulus(vec, name, o))
                    if best is None or cand[0] > best[0]:
                        best = cand
    if best is None:
        raise PowerGatingError(f"no sensitizable input-to-output path found in {nl.name}")
    return best[1]


@dataclass(frozen=True)
class ActiveMetrics:
    delay_s: float
    active_power_w: float
    # input, output and supply-current traces of the measuring transient
    waveforms: tuple = field(default=(), compare=False, repr=False)


def measure_active_metrics(m: GatedModule, path: PathStimulus, cfg: SimConfig,
                           t_edge: float = 20e-12, rise: float = 10e-12,
                           t_max: float = 5e-9) -> ActiveMetrics:
    """Delay of ``path`` at 50 % V_cc and mean supply power from the input
    edge to the output crossing."""
    vcc = m.vcc
    v_ref = 0.5 * vcc
    sim = Simulator(m.circuit, replace(cfg, t_end=t_max))
    _, V0 = dc_state(m, PgMode.ACTIVE, path.vector, cfg, sim)
    i_in = m.netlist.inputs.index(path.input)
    v0 = vcc if path.vector[i_in] else 0.0
    stim = Stimulus.from_dict({path.input: step_schedule(v0, vcc - v0, t_edge, rise)})
    out_idx = sim.index[path.output]
    start_high = V0[out_idx] > v_ref
    margin = 2

    state = {"after": None}

    def done(t, v):
        crossed = (v[path.output] < v_ref) if start_high else (v[path.output] > v_ref)
        if crossed and state["after"] is None:
            state["after"] = 0
        elif state["after"] is not None:
            state["after"] += 1
        return state["after"] is not None and state["after"] >= margin

    t, data = sim.transient(stim, [path.input, path.output, f"I({VDD})"], initial=V0,
                            until=done)
    wfs = [Waveform(n, t, data[n]) for n in (path.input, path.output)]
    delay = measure_delay(wfs, path.input, path.output, v_ref, t_start=t_edge)
    t_out = first_crossing(wfs[1], v_ref, t_edge)
    i_vdd = data[f"I({VDD})"]
    # current samples are step averages ending at t[k]
    sel = (t > t_edge) & (t <= t_out + 0.5 * cfg.dt)
    energy = vcc * float(np.sum(i_vdd[sel])) * cfg.dt
    window = float(np.sum(sel)) * cfg.dt
    traces = (*wfs, Waveform(f"I({VDD})", t, i_vdd))
    return ActiveMetrics(delay, energy / window if window > 0 else 0.0, traces)


# --------------------------------------------------------------------------
# sweeps and comparisons


class SweepParam(str, enum.Enum):
    DIMER_LINES = "DimerLines"
    RIBBON_COUNT = "RibbonCount"
    SPACING = "Spacing"


_SWEEP_FIELD = {SweepParam.DIMER_LINES: "n_dimer", SweepParam.RIBBON_COUNT: "n_rib",
                SweepParam.SPACING: "w_sp"}


@dataclass(frozen=True)
class SweepRow:
    value: float
    delay_s: float | None
    leakage_w: float | None
    error: str | None = None


@dataclass(frozen=True)
class HarnessSettings:
    """Measurement knobs that are not part of the circuit itself."""

    seed: int = 2024
    leakage_random_vectors: int = 8
    t_edge: float = 20e-12
    input_rise: float = 10e-12
    delay_t_max: float = 5e-9
    wake_dt: float = 20e-12
    wake_t_max: float = 1e-6
    wakeup_threshold: float = 0.05
    c_load: float = 0.1e-15
    vcc: float = 0.7


def sweep_device_param(nl: Netlist, param: SweepParam, values: Sequence[float],
                       lib: DeviceLibrary, cfg: SimConfig, harness: HarnessSettings,
                       base: dict | None = None, ratio: float = 0.10) -> list[SweepRow]:
    """Re-size the GMCPG_SS footer for each value of one GNR parameter and
    measure active delay and Sleep leakage. ``base`` fixes the other
    geometry fields (an ``n_rib`` entry there pins the ribbon count)."""
    param = SweepParam(param)
    base = dict(base if base is not None else {"n_dimer": 12, "n_rib": 12, "w_sp": 4.0})
    pg = PgStructure(PgKind.GMCPG_SS, ratio)
    path = find_sensitized_path(nl, harness.seed)
    vecs = leakage_vectors(len(nl.inputs), harness.seed, harness.leakage_random_vectors)
    rows = []
    for val in values:
        geom = dict(base)
        geom[_SWEEP_FIELD[param]] = int(val) if param is not SweepParam.SPACING else float(val)
        delay = leak = None
        errors = []
        try:
            m = build_module(nl, pg, lib, harness.vcc, harness.c_load, geom_override=geom)
        except (PowerGatingError, ValueError) as exc:
            rows.append(SweepRow(float(val), None, None, f"{type(exc).__name__}: {exc}"))
            continue
        try:
            delay = measure_active_metrics(m, path, cfg, harness.t_edge, harness.input_rise,
                                           harness.delay_t_max).delay_s
        except (SimulationError, PowerGatingError, ValueError) as exc:
            errors.append(f"delay: {type(exc).__name__}: {exc}")
        try:
            leak = mean_leakage(m, PgMode.SLEEP, vecs, cfg)
        except (SimulationError, PowerGatingError, ValueError) as exc:
            errors.append(f"leakage: {type(exc).__name__}: {exc}")
        rows.append(SweepRow(float(val), delay, leak, "; ".join(errors) or None))
    return rows


@dataclass(frozen=True)
class MetricsReport:
    benchmark: str
    structure: str
    leakage_w: float
    delay_s: float
    wakeup_s: float
    active_power_w: float
    pdp_j: float
    vgnr_sleep_v: float
    switch_width_nm: float
    fingerprint: str
    error: str | None = None

    def __post_init__(self):
        if self.error is None:
            for f in ("leakage_w", "delay_s", "wakeup_s", "active_power_w", "pdp_j"):
                if not getattr(self, f) >= 0:
                    raise PowerGatingError(f"{f} must be >= 0, got {getattr(self, f)}")

    @classmethod
    def failed(cls, benchmark, structure, fingerprint, error) -> MetricsReport:
        nan = math.nan
        return cls(benchmark, structure, nan, nan, nan, nan, nan, nan, nan, fingerprint, error)


def standby_mode(pg: PgStructure) -> PgMode:
    return PgMode.SLEEP if PgMode.SLEEP in pg.modes else PgMode.ACTIVE


def run_cell(nl: Netlist, pg: PgStructure, lib: DeviceLibrary, cfg: SimConfig,
             harness: HarnessSettings, fingerprint: str = "") -> MetricsReport:
    """All four metrics for one benchmark under one structure."""
    structure = pg.kind.value
    try:
        m = build_module(nl, pg, lib, harness.vcc, harness.c_load)
        mode = standby_mode(pg)
        vecs = leakage_vectors(len(nl.inputs), harness.seed, harness.leakage_random_vectors)
        leak = mean_leakage(m, mode, vecs, cfg)
        vg = vgnr_level(m, mode, vecs[0], cfg)
        path = find_sensitized_path(nl, harness.seed)
        act = measure_active_metrics(m, path, cfg, harness.t_edge, harness.input_rise,
                                     harness.delay_t_max)
        wake = measure_wakeup(m, mode, replace(cfg, dt=harness.wake_dt), harness.wakeup_threshold,
                              t_max=harness.wake_t_max)
        width = float(m.circuit.note("switch_target_width_nm", 0.0))
        return MetricsReport(nl.name, structure, leak, act.delay_s, wake, act.active_power_w,
                             act.active_power_w * act.delay_s, vg, width, fingerprint)
    except (SimulationError, PowerGatingError, ValueError) as exc:
        return MetricsReport.failed(nl.name, structure, fingerprint, f"{type(exc).__name__}: {exc}")


def _run_cell_args(args):
    return run_cell(*args)


def compare_structures(benchmarks: Sequence[Netlist], structures: Sequence[PgStructure],
                       lib: DeviceLibrary, cfg: SimConfig, harness: HarnessSettings,
                       fingerprint: str = "", workers: int = 1) -> list[MetricsReport]:
    """Cross product of benchmarks and structures, in benchmark-major order
    regardless of how cells are scheduled."""
    jobs = [(nl, pg, lib, cfg, harness, fingerprint) for nl in benchmarks for pg in structures]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_cell_args, jobs))
    return [run_cell(*j) for j in jobs]


def normalized_reduction(value: float, reference: float) -> float:
    """Fractional reduction of ``value`` relative to ``reference``."""
    if not (math.isfinite(value) and math.isfinite(reference)) or reference == 0:
        return math.nan
    return (reference - value) / reference
