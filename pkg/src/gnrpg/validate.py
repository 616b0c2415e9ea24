"""Self-check suite behind ``gnrpg validate``.

Each check recomputes an invariant through a route independent of the code
under test where one exists (tight-binding spectra over every subband, a
recursive Boolean evaluator, an analytic RC response, per-gate device-count
table) and returns a pass/fail line.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace
from functools import reduce
from itertools import product
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .circuit import GND, VDD, VGNR, Capacitor, Circuit, Mosfet, Resistor, VoltageSource
from .circuit_sim import SimConfig, Simulator, Stimulus, step_schedule
from .config import RunConfig, default_config_yaml, parse_config
from .device_models import (BiasPoint, Chirality, GnrDevice, Polarity, channel_charge_residual,
                            classify_chirality, gnr_device_current, gnr_gate_width, mos_ids,
                            solve_channel_potential, thermal_voltage)
from .netlist import (GateKind, Netlist, NetlistError, corpus_names, evaluate, expand_to_transistors,
                      load_bench, parse_bench, read_bench, serialize_bench)
from .power_gating import (PgKind, PgMode, PgStructure, build_module, leakage_vectors, mean_leakage,
                           measure_wakeup, qm_mode_controls, vgnr_level)
from .reports import csv_text, read_csv, svg_from_table


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}" + (
            f": {self.detail}" if self.detail else "")


# --------------------------------------------------------------------------
# independent oracles


def tight_binding_gap_closes(n_dimer: int) -> bool:
    """True when some transverse mode of an armchair ribbon sits at zero energy."""
    p = np.arange(1, n_dimer + 1)
    return bool(np.min(np.abs(1 + 2 * np.cos(p * np.pi / (n_dimer + 1)))) < 1e-9)


def boolean_oracle(nl: Netlist, bits: dict[str, bool]) -> dict[str, bool]:
    """Recursive evaluation with plain Python operators."""
    ops = {
        GateKind.AND: lambda v: all(v), GateKind.NAND: lambda v: not all(v),
        GateKind.OR: lambda v: any(v), GateKind.NOR: lambda v: not any(v),
        GateKind.XOR: lambda v: reduce(lambda a, b: a != b, v),
        GateKind.XNOR: lambda v: not reduce(lambda a, b: a != b, v),
        GateKind.NOT: lambda v: not v[0], GateKind.BUFF: lambda v: v[0],
    }
    gates = {g.output: g for g in nl.gates}
    memo = dict(bits)

    def val(s):
        if s not in memo:
            g = gates[s]
            memo[s] = bool(ops[g.kind]([val(f) for f in g.fanins]))
        return memo[s]

    return {o: val(o) for o in nl.outputs}


# transistor count per gate kind and fan-in k, written out independently
_DEVICE_TABLE = {
    GateKind.NOT: lambda k: 2, GateKind.BUFF: lambda k: 4,
    GateKind.NAND: lambda k: 2 * k, GateKind.NOR: lambda k: 2 * k,
    GateKind.AND: lambda k: 2 * k + 2, GateKind.OR: lambda k: 2 * k + 2,
    GateKind.XOR: lambda k: 16 * (k - 1), GateKind.XNOR: lambda k: 16 * (k - 1) + 2,
}


def expected_device_count(nl: Netlist) -> int:
    return sum(_DEVICE_TABLE[g.kind](len(g.fanins)) for g in nl.gates)


def pulldown_problems(c: Circuit) -> list[str]:
    """Logic NMOS channel groups that do not reach VGNR, or short to a rail."""
    adj: dict[str, set[str]] = {}
    for d in c.devices:
        if isinstance(d, Mosfet) and d.params.polarity is Polarity.N and not d.is_switch:
            adj.setdefault(d.drain, set()).add(d.source)
            adj.setdefault(d.source, set()).add(d.drain)
    seen: set[str] = set()
    bad = []
    for start in sorted(adj):
        if start in seen or start in (VGNR, GND, VDD):
            continue
        comp, todo = {start}, deque([start])
        while todo:
            n = todo.popleft()
            for m in adj.get(n, ()):
                if m not in comp:
                    comp.add(m)
                    # rails terminate a chain; do not walk through them
                    if m not in (VGNR, GND, VDD):
                        todo.append(m)
        seen |= comp
        if VGNR not in comp or GND in comp or VDD in comp:
            bad.append(start)
    return bad


# --------------------------------------------------------------------------
# checks


def _check(name: str, fn: Callable[[], tuple[bool, str]]) -> CheckResult:
    try:
        ok, detail = fn()
    except Exception as exc:  # a crash inside a check is a failed check
        return CheckResult(name, False, f"{type(exc).__name__}: {exc}")
    return CheckResult(name, bool(ok), detail)


def device_checks(cfg: RunConfig) -> list[CheckResult]:
    geom = cfg.device.geometry()
    dev = GnrDevice.build(geom, cfg.device.n0_per_ribbon, cfg.device.subbands,
                          cfg.device.temperature_k)
    rng = np.random.default_rng(cfg.harness.seed)
    out = []

    def gate_width():
        w = gnr_gate_width(geom)
        return abs(w - 33.6) <= 0.05, f"W_G = {w:.4f} nm"

    def width_linear():
        errs = [abs(gnr_gate_width(geom.with_(n_rib=2 * k)) - 2 * gnr_gate_width(geom.with_(n_rib=k)))
                for k in range(1, 30)]
        return max(errs) < 1e-9, f"max error {max(errs):.2e} nm"

    def chirality():
        bad = [n for n in range(3, 61)
               if (classify_chirality(n) is Chirality.METALLIC) != tight_binding_gap_closes(n)]
        return not bad, f"mismatches at N = {bad}" if bad else "N = 3..60 agree"

    biases = [BiasPoint(*rng.uniform(-0.7, 0.7, 3), v_sub=rng.uniform(-0.2, 0.2))
              for _ in range(100)]

    def zero_bias():
        vals = [gnr_device_current(dev, BiasPoint(b.v_g, b.v_d, b.v_d, b.v_sub)) for b in biases]
        return all(v == 0.0 for v in vals), f"max |I| = {max(map(abs, vals)):.1e} A"

    def antisymmetry():
        worst = 0.0
        for b in biases:
            a = gnr_device_current(dev, b)
            r = gnr_device_current(dev, BiasPoint(b.v_g, b.v_s, b.v_d, b.v_sub))
            worst = max(worst, abs(a + r) / max(abs(a), 1e-300))
        return worst <= 1e-15, f"max relative mismatch {worst:.1e}"

    def psi_residual():
        phi = thermal_voltage(dev.temperature)
        eps = dev.spectrum.array
        c = dev.caps
        worst, changes = 0.0, 0
        for b in biases:
            psi = solve_channel_potential(geom, c, dev.spectrum, b, dev.n0, dev.temperature)
            v = [np.asarray(x) for x in (b.v_g, b.v_d, b.v_s, b.v_sub)]
            args = (c.c_g_ch, c.c_sub_ch, c.c_ch_d, c.c_ch_s, dev.n0, eps, *v, phi)
            worst = max(worst, abs(float(channel_charge_residual(np.asarray(psi), *args)[0])))
            grid = np.linspace(-2.0, 2.0, 1000)
            f = np.sign(channel_charge_residual(grid, *args)[0])
            changes = max(changes, int(np.count_nonzero(np.diff(f[f != 0]))))
        return worst < 1e-21 and changes <= 1, (f"max residual {worst:.1e} C, "
                                                 f"max sign changes {changes}")

    def gnr_monotone():
        vg = np.arange(0.0, 0.3505, 0.001)
        i = [gnr_device_current(dev, BiasPoint(v, 0.35)) for v in vg]
        return bool(np.all(np.diff(i) > 0)), f"I(0.35 V) = {i[-1]:.3e} A"

    def on_off_ratio():
        v = cfg.module.switch_vdd
        g = gnr_device_current(dev, BiasPoint(v, v)) / gnr_device_current(dev, BiasPoint(0.0, v))
        n = cfg.mos_pair().nmos
        m = mos_ids(n, BiasPoint(v, v)) / mos_ids(n, BiasPoint(0.0, v))
        return g / m >= 10, f"GNR/MOS on-off ratio {g / m:.1f} at {v} V"

    for name, fn in [("gate width at table parameters", gate_width),
                     ("gate width linear in ribbon count", width_linear),
                     ("chirality matches tight-binding gap zeros", chirality),
                     ("zero current at V_D = V_S", zero_bias),
                     ("current antisymmetric under drain/source swap", antisymmetry),
                     ("channel-potential residual and uniqueness", psi_residual),
                     ("GNRFET current increasing in V_GS", gnr_monotone),
                     ("GNRFET on/off advantage over MOSFET", on_off_ratio)]:
        out.append(_check(name, fn))
    return out


def bench_checks(paths: Iterable[Path] | None = None) -> list[CheckResult]:
    """Parser, serializer, Boolean and expansion checks over a bench corpus."""
    if paths is None:
        items = [(n, lambda n=n: load_bench(n)) for n in corpus_names()]
    else:
        items = [(p.stem, lambda p=p: read_bench(p)) for p in sorted(paths)]
    out = []
    for name, loader in items:
        def one(loader=loader):
            nl = loader()
            if parse_bench(serialize_bench(nl)) != nl:
                return False, "round trip changed the netlist"
            notes = [f"{len(nl.inputs)} in / {len(nl.outputs)} out / {len(nl.gates)} gates"]
            if len(nl.inputs) <= 10:
                cols = list(product((False, True), repeat=len(nl.inputs)))
                arr = np.array(cols, dtype=bool).T
                got = evaluate(nl, dict(zip(nl.inputs, arr)))
                for k, bits in enumerate(cols):
                    want = boolean_oracle(nl, dict(zip(nl.inputs, bits)))
                    if any(bool(got[o][k]) != v for o, v in want.items()):
                        return False, f"truth table differs at input {bits}"
                notes.append("truth table ok")
            c = expand_to_transistors(nl)
            n_dev = sum(isinstance(d, Mosfet) for d in c.devices)
            if n_dev != expected_device_count(nl):
                return False, f"{n_dev} transistors, expected {expected_device_count(nl)}"
            bad = pulldown_problems(c)
            if bad:
                return False, f"pull-down groups not ending at VGNR: {bad[:3]}"
            return True, ", ".join(notes)
        try:
            out.append(_check(f"bench {name}", one))
        except NetlistError as exc:
            out.append(CheckResult(f"bench {name}", False, str(exc)))
    return out


def simulator_checks(cfg: RunConfig) -> list[CheckResult]:
    sim_cfg = cfg.sim
    out = []

    def rc_oracle():
        r, c_val = 1e4, 1e-13
        tau = r * c_val
        circ = Circuit("rc", (VoltageSource("V.in", "in", 0.0), Resistor("R1", "in", "out", r),
                              Capacitor("C1", "out", GND, c_val)))
        sc = SimConfig(dt=tau / 2000, t_end=tau)
        stim = Stimulus.from_dict({"in": [(0.0, 0.0), (1e-18, 1.0)]})
        t, d = Simulator(circ, sc).transient(stim, ["out"])
        want = 1 - math.exp(-1.0)
        err = abs(d["out"][-1] - want) / want
        return err < 0.005, f"relative error {err:.1e} at one time constant"

    def kcl_and_gmin():
        worst_r, worst_g = 0.0, 0.0
        for name in [*corpus_names(), "invchain"]:
            m = build_module(load_bench(name), PgStructure(PgKind.NO_GATING), cfg.library())
            sim = Simulator(m.circuit, sim_cfg)
            V = sim.dc()
            worst_r = max(worst_r, float(np.max(np.abs(sim.kcl_residual(V)))))
            worst_g = max(worst_g, sim.gmin_shift())
        ok = worst_r < sim_cfg.abstol and worst_g < 1e-3
        return ok, f"max KCL residual {worst_r:.1e} A, gmin shift {worst_g * 1e3:.3f} mV"

    def determinism():
        nl = load_bench("invchain2x3")
        m = build_module(nl, PgStructure(PgKind.NO_GATING), cfg.library())
        stim = Stimulus.from_dict({"in0": step_schedule(0.0, 0.7, 10e-12, 10e-12)})
        sc = SimConfig(dt=1e-12, t_end=60e-12)
        runs = [Simulator(m.circuit, sc).transient(stim, ["c0_2"])[1]["c0_2"] for _ in range(2)]
        return bool(np.array_equal(runs[0], runs[1])), "repeat transients bit-identical"

    for name, fn in [("transient matches RC oracle", rc_oracle),
                     ("DC KCL residual and gmin removal", kcl_and_gmin),
                     ("simulation determinism", determinism)]:
        out.append(_check(name, fn))
    return out


def gating_checks(cfg: RunConfig, benches: Iterable[str]) -> list[CheckResult]:
    out = []
    lib = cfg.library()
    h = cfg.harness_settings()

    def qm_table():
        rows = {m: qm_mode_controls(m) for m in PgMode}
        enc = {(c.nps, c.sls, c.sps) for c in rows.values()}
        want = {PgMode.ACTIVE: (0, 0, 1), PgMode.NAP: (1, 0, 0), PgMode.SLUMBER: (0, 1, 0),
                PgMode.SLEEP: (0, 0, 0)}
        ok = all((c.nps, c.sls, c.sps) == want[m] and c.mode is m for m, c in rows.items())
        return ok and len(enc) == 4, "four distinct rows, each decoding to its mode"

    out.append(_check("QM control table is a bijection", qm_table))

    for name in benches:
        nl = load_bench(name)

        def ordering(nl=nl):
            vecs = leakage_vectors(len(nl.inputs), h.seed, h.leakage_random_vectors)
            leak, wake = {}, {}
            for kind in (PgKind.MOSPG, PgKind.GMCPG_SS, PgKind.GMCPG_NS):
                m = build_module(nl, cfg.structure(kind), lib, h.vcc, h.c_load)
                leak[kind] = mean_leakage(m, PgMode.SLEEP, vecs, cfg.sim)
                if kind is not PgKind.GMCPG_NS:
                    wake[kind] = measure_wakeup(m, PgMode.SLEEP,
                                                replace(cfg.sim, dt=h.wake_dt),
                                                h.wakeup_threshold, t_max=h.wake_t_max)
            ok = (leak[PgKind.GMCPG_SS] < leak[PgKind.MOSPG]
                  and leak[PgKind.GMCPG_NS] <= leak[PgKind.GMCPG_SS]
                  and wake[PgKind.GMCPG_SS] < wake[PgKind.MOSPG])
            return ok, (f"leakage MOSPG {leak[PgKind.MOSPG]:.3e} SS {leak[PgKind.GMCPG_SS]:.3e} "
                        f"NS {leak[PgKind.GMCPG_NS]:.3e} W; wake-up SS "
                        f"{wake[PgKind.GMCPG_SS]:.3e} MOSPG {wake[PgKind.MOSPG]:.3e} s")

        def qm_modes(nl=nl):
            m = build_module(nl, cfg.structure(PgKind.QM_GMCPG), lib, h.vcc, h.c_load)
            vecs = leakage_vectors(len(nl.inputs), h.seed, h.leakage_random_vectors)
            order = (PgMode.SLEEP, PgMode.SLUMBER, PgMode.NAP, PgMode.ACTIVE)
            vg = [vgnr_level(m, md, vecs[0], cfg.sim) for md in order]
            lk = [mean_leakage(m, md, vecs, cfg.sim) for md in order]
            ok = all(a > b for a, b in zip(vg, vg[1:])) and all(a < b for a, b in zip(lk, lk[1:]))
            return ok, "VGNR " + " > ".join(f"{v:.8f}" for v in vg)

        out.append(_check(f"{name}: SS/NS/MOSPG leakage and wake-up ordering", ordering))
        out.append(_check(f"{name}: QM VGNR and leakage mode ordering", qm_modes))
    return out


def report_checks(cfg: RunConfig) -> list[CheckResult]:
    def header_and_purity():
        hdr = [f"config_fingerprint: {cfg.fingerprint()}", f"seed: {cfg.harness.seed}"]
        text = csv_text(["x", "y"], [[1.0, 2.0], [2.0, 3.0]], hdr)
        _, _, got = read_csv(text)
        a = svg_from_table(text, "x", ["y"], "t", "y")
        b = svg_from_table(text, "x", ["y"], "t", "y")
        return got == hdr and a == b, "header round-trips, SVG depends on CSV only"

    def config_round_trip():
        return parse_config(default_config_yaml()) == RunConfig(), "default YAML parses to defaults"

    return [_check("report header and SVG purity", header_and_purity),
            _check("config defaults round-trip", config_round_trip)]


def run_all(cfg: RunConfig, bench_dir: Path | None = None, full: bool = False) -> list[CheckResult]:
    paths = sorted(Path(bench_dir).glob("*.bench")) if bench_dir is not None else None
    results = device_checks(cfg)
    results += bench_checks(paths)
    results += simulator_checks(cfg)
    benches = ["invchain", "c17", "c432"] + (
        [n for n in corpus_names() if n not in ("c17", "c432")] if full else [])
    results += gating_checks(cfg, benches if full else ["invchain", "c17"])
    results += report_checks(cfg)
    return results
