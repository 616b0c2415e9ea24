import math
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gnrpg.circuit import (VGNR, Capacitor, Circuit, CircuitError, Gnrfet, Mosfet, Resistor,
                           Switch, VoltageSource)
from gnrpg.circuit_sim import SimConfig
from gnrpg.netlist import (evaluate_outputs, expand_to_transistors, inverter_chain_netlist,
                           load_bench, parse_bench)
from gnrpg.power_gating import (MODES_BY_KIND, GatedModule, MetricsReport, PgKind, PgMode,
                                PgStructure, PowerGatingError, QmControls, SizingError,
                                SweepParam, attach_footer, build_module, compare_structures,
                                dc_state, find_sensitized_path, leakage_vectors, mean_leakage,
                                measure_wakeup, normalized_reduction, qm_mode_controls,
                                ribbons_for_width, run_cell, sweep_device_param, switch_devices,
                                vgnr_level)

C17_NMOS_WIDTH = 12 * 33.6


@pytest.fixture(scope="module")
def c17():
    return load_bench("c17")


@pytest.fixture(scope="module")
def c17_reports(c17, cfg, lib, harness):
    return {k: run_cell(c17, cfg.structure(k), lib, cfg.sim, harness)
            for k in ("MOSPG", "GMCPG_SS", "GMCPG_NS", "TM_GMCPG", "QM_GMCPG")}


# ---------------------------------------------------------------- control encoding


def test_qm_table_is_a_bijection():
    rows = {m: qm_mode_controls(m) for m in PgMode}
    assert {(c.nps, c.sls, c.sps) for c in rows.values()} == {(0, 0, 1), (1, 0, 0), (0, 1, 0),
                                                               (0, 0, 0)}
    for mode, ctl in rows.items():
        assert ctl.mode is mode
    assert qm_mode_controls(PgMode.ACTIVE) == QmControls(0, 0, 1)


@pytest.mark.parametrize("bits", [(1, 1, 0), (1, 0, 1), (0, 1, 1), (1, 1, 1)])
def test_qm_rejects_unused_encodings(bits):
    with pytest.raises(PowerGatingError):
        QmControls(*bits)


def test_modes_per_structure():
    assert PgStructure(PgKind.TM_GMCPG).modes == (PgMode.ACTIVE, PgMode.NAP, PgMode.SLEEP)
    assert len(PgStructure(PgKind.QM_GMCPG).modes) == 4
    assert set(MODES_BY_KIND) == set(PgKind)


@pytest.mark.parametrize("kwargs", [
    {"kind": "GMCPG_SS", "switch_size_ratio": 0.0},
    {"kind": "GMCPG_SS", "switch_size_ratio": 1.5},
    {"kind": "GMCPG_NS", "ns_switch_count": 3},
    {"kind": "QM_GMCPG", "qm_dimer_pair": (9, 15)},
    {"kind": "QM_GMCPG", "qm_dimer_pair": (14, 9)},
    {"kind": "TM_GMCPG", "qm_dimer_pair": (15, 11)},
])
def test_invalid_structures(kwargs):
    with pytest.raises(PowerGatingError):
        PgStructure(**kwargs)


def test_default_ratios():
    assert PgStructure(PgKind.MOSPG).switch_size_ratio == 0.10
    assert PgStructure(PgKind.GMCPG_SS).switch_size_ratio == 0.01


# ---------------------------------------------------------------- footer construction


def test_ribbons_for_width(lib):
    pitch = lib.gnr_base.ribbon_pitch
    assert ribbons_for_width(0.5 * pitch, lib.gnr_base) == 1
    assert ribbons_for_width(pitch, lib.gnr_base) == 1
    assert ribbons_for_width(2.01 * pitch, lib.gnr_base) == 3
    with pytest.raises(SizingError):
        ribbons_for_width(0.0, lib.gnr_base)


def test_mospg_switch_sizing(c17, lib):
    c = build_module(c17, PgStructure(PgKind.MOSPG), lib).circuit
    (sw,) = switch_devices(c)
    assert isinstance(sw, Mosfet)
    assert sw.params.width == pytest.approx(0.10 * C17_NMOS_WIDTH)
    assert sw.params.v_th == pytest.approx(lib.mos.nmos.v_th + 0.15)
    assert (sw.drain, sw.source) == (VGNR, "GND")


def test_gmcpg_ss_switch_sizing(lib):
    nl = inverter_chain_netlist()
    c = build_module(nl, PgStructure(PgKind.GMCPG_SS), lib).circuit
    (sw,) = switch_devices(c)
    target = 0.01 * 400 * 33.6
    assert c.note("switch_target_width_nm") == pytest.approx(target)
    assert sw.device.geom.n_rib == math.ceil(target / lib.gnr_base.ribbon_pitch)


def test_ns_is_two_series_pairs(c17, lib):
    c = build_module(c17, PgStructure(PgKind.GMCPG_NS), lib).circuit
    sws = switch_devices(c)
    assert len(sws) == 4 and all(isinstance(s, Gnrfet) for s in sws)
    for b in range(2):
        top, bot = sws[2 * b], sws[2 * b + 1]
        assert top.drain == VGNR and top.source == bot.drain and bot.source == "GND"
    assert set(c.controls_for("Sleep").values()) == {0.0}


def test_qm_footer_and_back_gates(c17, lib):
    c = build_module(c17, PgStructure(PgKind.QM_GMCPG), lib).circuit
    sws = {s.name: s for s in switch_devices(c)}
    assert set(sws) == {"G.ST0", "G.ST1", "G.ST2"}
    assert sws["G.ST1"].device.geom.n_dimer == 15
    assert sws["G.ST2"].device.geom.n_dimer == 9
    bg = 0.2 * 0.7
    assert c.controls_for("Nap")["BG1"] == pytest.approx(bg)
    assert c.controls_for("Slumber")["BG2"] == pytest.approx(bg)
    assert c.controls_for("Sleep") == {"G0": 0.0, "G1": 0.0, "G2": 0.0, "BG1": 0.0, "BG2": 0.0}
    assert c.controls_for("Active")["G0"] == 0.35


def test_footer_cannot_be_attached_twice(c17, lib):
    m = build_module(c17, PgStructure(PgKind.GMCPG_SS), lib)
    with pytest.raises(CircuitError):
        attach_footer(m.circuit, PgStructure(PgKind.MOSPG), lib)


def test_unavailable_mode(c17, lib):
    m = build_module(c17, PgStructure(PgKind.GMCPG_SS), lib)
    with pytest.raises(PowerGatingError):
        dc_state(m, PgMode.NAP, (0,) * 5)
    with pytest.raises(PowerGatingError):
        dc_state(m, PgMode.ACTIVE, (0,) * 4)


# ---------------------------------------------------------------- functional behaviour


@pytest.mark.parametrize("kind", ["NoGating", "GMCPG_SS", "QM_GMCPG"])
def test_active_outputs_match_logic(c17, lib, kind):
    m = build_module(c17, PgStructure(kind), lib)
    for vec in leakage_vectors(5, seed=7, n_random=4):
        sim, V = dc_state(m, PgMode.ACTIVE, vec)
        got = tuple(V[sim.index[o]] > 0.35 for o in c17.outputs)
        assert got == evaluate_outputs(c17, vec)


def test_leakage_vectors():
    v = leakage_vectors(6, seed=3, n_random=8)
    assert len(v) == 10 and v[0] == (0,) * 6 and v[1] == (1,) * 6
    assert v == leakage_vectors(6, seed=3, n_random=8)
    assert v != leakage_vectors(6, seed=4, n_random=8)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_sensitized_path_really_toggles(seed):
    nl = load_bench("c17")
    p = find_sensitized_path(nl, seed)
    flipped = list(p.vector)
    i = nl.inputs.index(p.input)
    flipped[i] ^= 1
    k = nl.outputs.index(p.output)
    assert evaluate_outputs(nl, p.vector)[k] != evaluate_outputs(nl, flipped)[k]


def test_no_gating_wakes_instantly(c17, lib, cfg):
    m = build_module(c17, PgStructure(PgKind.NO_GATING), lib)
    assert measure_wakeup(m, PgMode.ACTIVE, cfg.sim) == 0.0


def test_qm_mode_ordering(c17, lib, cfg, harness):
    m = build_module(c17, cfg.structure("QM_GMCPG"), lib)
    vecs = leakage_vectors(5, harness.seed, harness.leakage_random_vectors)
    order = (PgMode.SLEEP, PgMode.SLUMBER, PgMode.NAP, PgMode.ACTIVE)
    vg = [vgnr_level(m, md, vecs[0], cfg.sim) for md in order]
    lk = [mean_leakage(m, md, vecs, cfg.sim) for md in order]
    assert all(a > b for a, b in zip(vg, vg[1:]))
    assert all(a < b for a, b in zip(lk, lk[1:]))


def test_qm_wakeup_ordering(c17, lib, cfg, harness):
    m = build_module(c17, cfg.structure("QM_GMCPG"), lib)
    sc = replace(cfg.sim, dt=harness.wake_dt)
    wakes = [measure_wakeup(m, md, sc, t_max=harness.wake_t_max)
             for md in (PgMode.NAP, PgMode.SLUMBER, PgMode.SLEEP)]
    assert wakes[0] <= wakes[1] <= wakes[2]


# ---------------------------------------------------------------- full metric cells


def test_c17_cells_complete(c17_reports):
    for r in c17_reports.values():
        assert r.error is None
        assert r.leakage_w > 0 and r.delay_s > 0 and r.wakeup_s > 0


def test_c17_orderings(c17_reports):
    r = c17_reports
    assert r["GMCPG_SS"].leakage_w < r["MOSPG"].leakage_w
    assert r["GMCPG_NS"].leakage_w <= r["GMCPG_SS"].leakage_w
    assert r["GMCPG_SS"].wakeup_s < r["MOSPG"].wakeup_s


def test_pdp_is_power_times_delay(c17_reports):
    for r in c17_reports.values():
        assert r.pdp_j == pytest.approx(r.active_power_w * r.delay_s, rel=1e-12)


def test_run_cell_is_deterministic(c17, cfg, lib, harness, c17_reports):
    again = run_cell(c17, cfg.structure("GMCPG_SS"), lib, cfg.sim, harness)
    assert again == c17_reports["GMCPG_SS"]


def test_failed_report_carries_error():
    r = MetricsReport.failed("c17", "MOSPG", "abc", "DcFailure: boom")
    assert math.isnan(r.leakage_w) and r.error == "DcFailure: boom"
    with pytest.raises(PowerGatingError):
        MetricsReport("c17", "MOSPG", -1.0, 0, 0, 0, 0, 0, 0, "")


def test_run_cell_reports_simulation_failure(c17, cfg, lib, harness):
    tight = replace(cfg.sim, max_newton_iters=1, source_steps=1)
    r = run_cell(c17, cfg.structure("GMCPG_SS"), lib, tight, harness)
    assert r.error is not None and math.isnan(r.delay_s)


@settings(max_examples=100)
@given(st.floats(0, 1e-6), st.floats(1e-15, 1e-6))
def test_normalized_reduction(value, ref):
    got = normalized_reduction(value, ref)
    assert got <= 1.0
    assert (got > 0) == (value < ref)
    assert normalized_reduction(ref, ref) == 0.0


def test_normalized_reduction_degenerate():
    assert math.isnan(normalized_reduction(1.0, 0.0))
    assert math.isnan(normalized_reduction(math.nan, 1.0))


# ---------------------------------------------------------------- parameter sweep


def test_sweep_rows(cfg, lib, harness):
    nl = inverter_chain_netlist(2, 3)
    rows = sweep_device_param(nl, SweepParam.DIMER_LINES, [11, 12, 15], lib,
                              SimConfig(), harness, base={"n_dimer": 12, "n_rib": 2, "w_sp": 4.0})
    assert [r.value for r in rows] == [11.0, 12.0, 15.0]
    for r in rows:
        assert r.error is None and r.delay_s > 0 and r.leakage_w > 0
    # a metallic ribbon barely switches off; a wider gap leaks less
    assert rows[0].leakage_w > 100 * rows[1].leakage_w
    assert rows[1].leakage_w < rows[2].leakage_w


def test_sweep_records_invalid_geometry(lib, harness):
    nl = inverter_chain_netlist(2, 3)
    (row,) = sweep_device_param(nl, SweepParam.SPACING, [-1.0], lib, SimConfig(), harness)
    assert row.delay_s is None and row.leakage_w is None
    assert "nm" in row.error or "Error" in row.error


def test_ribbon_sweep_trades_leakage_for_delay(cfg, lib, harness):
    nl = inverter_chain_netlist(2, 3)
    rows = sweep_device_param(nl, SweepParam.RIBBON_COUNT, [1, 4], lib, SimConfig(), harness,
                              base={"n_dimer": 12, "n_rib": 1, "w_sp": 4.0})
    assert rows[1].leakage_w > rows[0].leakage_w
    assert rows[1].delay_s < rows[0].delay_s


# ---------------------------------------------------------------- reference examples


def test_no_gating_keeps_devices_and_grounds_vgnr(c17, lib):
    bare = expand_to_transistors(c17, lib.mos)
    c = build_module(c17, PgStructure(PgKind.NO_GATING), lib).circuit
    extra = [d for d in c.devices if d not in bare.devices]
    assert len(extra) == 1 and extra[0].node == VGNR and extra[0].value == 0.0


def test_qm_exposes_three_gate_controls(c17, lib):
    c = build_module(c17, PgStructure(PgKind.QM_GMCPG), lib).circuit
    assert c.note("switch_gates") == ("G0", "G1", "G2")
    assert set(c.controls_for("Active")) == {"G0", "G1", "G2", "BG1", "BG2"}


@pytest.mark.parametrize("kind", ["MOSPG", "GMCPG_SS", "GMCPG_NS", "TM_GMCPG", "QM_GMCPG"])
def test_active_leaks_more_than_sleep_and_vgnr_droop_is_bounded(c17, lib, cfg, kind):
    m = build_module(c17, cfg.structure(kind), lib)
    vecs = leakage_vectors(5, 1, 2)
    assert mean_leakage(m, PgMode.ACTIVE, vecs) > mean_leakage(m, PgMode.SLEEP, vecs)
    for v in vecs:
        assert 0.0 < vgnr_level(m, PgMode.ACTIVE, v) < 0.07


def test_sleep_cuts_inverter_chain_leakage(lib, cfg, harness):
    nl = inverter_chain_netlist()
    vecs = leakage_vectors(20, harness.seed, 2)
    off = mean_leakage(build_module(nl, PgStructure(PgKind.NO_GATING), lib), PgMode.ACTIVE, vecs)
    ss = mean_leakage(build_module(nl, cfg.structure("GMCPG_SS"), lib), PgMode.SLEEP, vecs)
    assert ss < 0.3 * off


def test_wakeup_matches_rc_discharge():
    c_v, r_on, r_leak = 1e-13, 1e4, 1e12
    devs = (VoltageSource("V.VDD", "VDD", 0.7), VoltageSource("V.a", "a", 0.0),
            VoltageSource("V.SLP", "SLP", 1.0), Resistor("R.leak", "VDD", VGNR, r_leak),
            Capacitor("C.VGNR", VGNR, "GND", c_v),
            Switch("S", VGNR, "GND", "SLP", r_on=r_on, r_off=1e15))
    circ = Circuit("rcwake", devs, footer="GMCPG_SS",
                   mode_controls=(("Active", (("SLP", 1.0),)), ("Sleep", (("SLP", 0.0),))))
    nl = parse_bench("INPUT(a)\nOUTPUT(y)\ny = BUFF(a)\n")
    m = GatedModule(nl, circ, PgStructure(PgKind.GMCPG_SS))
    v0 = 0.7 * 1e15 / (1e15 + r_leak)
    r_par = r_on * r_leak / (r_on + r_leak)
    v_inf = 0.7 * r_on / (r_on + r_leak)
    tau = c_v * r_par
    want = tau * math.log((v0 - v_inf) / (0.05 * 0.7 - v_inf))
    got = measure_wakeup(m, PgMode.SLEEP, SimConfig(dt=tau / 200), t_max=10 * tau)
    assert got == pytest.approx(want, rel=0.05)


def test_compare_row_count(c17, cfg, lib, harness):
    nl2 = inverter_chain_netlist(1, 2)
    structs = [cfg.structure("GMCPG_SS"), PgStructure(PgKind.NO_GATING)]
    reps = compare_structures([c17, nl2], structs, lib, cfg.sim, harness)
    assert [(r.benchmark, r.structure) for r in reps] == [
        ("c17", "GMCPG_SS"), ("c17", "NoGating"), (nl2.name, "GMCPG_SS"), (nl2.name, "NoGating")]
