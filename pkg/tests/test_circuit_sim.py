import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gnrpg.circuit import (GND, VDD, Capacitor, Circuit, CircuitError, CurrentSource, Mosfet,
                           Resistor, Switch, VoltageSource)
from gnrpg.circuit_sim import (DcFailure, Integration, NoCrossingError, SimConfig,
                               SimulationError, Simulator, Stimulus, Waveform,
                               dc_operating_point, first_crossing, kcl_residuals, measure_delay,
                               step_schedule, transient, write_waveforms_csv)
from gnrpg.netlist import corpus_names, inverter_chain_netlist, load_bench
from gnrpg.power_gating import PgKind, PgStructure, build_module


def rc(r=1e4, c=1e-13, v=0.0):
    return Circuit("rc", (VoltageSource("V.in", "in", v), Resistor("R1", "in", "out", r),
                          Capacitor("C1", "out", GND, c)))


def ungated(nl, lib):
    return build_module(nl, PgStructure(PgKind.NO_GATING), lib).circuit


# ---------------------------------------------------------------- circuit container


def test_circuit_collects_nodes_in_order():
    c = rc()
    assert c.nodes == (GND, "in", "out")
    assert set(c.sources()) == {"in"}


def test_circuit_rejects_bad_sources():
    with pytest.raises(CircuitError):
        Circuit("x", (VoltageSource("V1", GND, 1.0),))
    with pytest.raises(CircuitError):
        Circuit("x", (VoltageSource("V1", "a", 1.0), VoltageSource("V2", "a", 0.0)))
    with pytest.raises(CircuitError):
        Circuit("x", (Resistor("R", "a", "b", 1.0), Resistor("R", "b", GND, 1.0)))


def test_with_sources():
    c = rc().with_sources({"in": 0.5})
    assert c.sources()["in"].value == 0.5
    with pytest.raises(CircuitError):
        rc().with_sources({"out": 1.0})


def test_sim_config_validation():
    with pytest.raises(ValueError):
        SimConfig(dt=0.0)
    with pytest.raises(ValueError):
        SimConfig(gmin=-1.0)
    assert SimConfig(integration="BackwardEuler").integration is Integration.BACKWARD_EULER


# ---------------------------------------------------------------- linear DC


def test_divider_dc():
    c = Circuit("div", (VoltageSource("V", "a", 0.7), Resistor("R1", "a", "m", 3e3),
                        Resistor("R2", "m", GND, 1e3)))
    v = dc_operating_point(c)
    assert v["m"] == pytest.approx(0.175, abs=1e-12)
    assert abs(kcl_residuals(c, v)["m"]) < 1e-15


def test_current_source_into_resistor():
    c = Circuit("i", (CurrentSource("I1", GND, "n", 1e-6), Resistor("R", "n", GND, 2e3)))
    assert dc_operating_point(c)["n"] == pytest.approx(2e-3, rel=1e-9)


def test_switch_follows_control():
    devs = (VoltageSource("V", "a", 1.0), VoltageSource("C", "ctrl", 1.0),
            Switch("S", "a", "m", "ctrl", r_on=1e3), Resistor("R", "m", GND, 1e3))
    c = Circuit("sw", devs)
    assert dc_operating_point(c)["m"] == pytest.approx(0.5, rel=1e-9)
    assert dc_operating_point(c.with_sources({"ctrl": 0.0}))["m"] < 1e-11


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(1e2, 1e7), min_size=2, max_size=6), st.floats(0.1, 1.0))
def test_resistor_ladder_matches_series_formula(rs, v):
    devs = [VoltageSource("V", "n0", v)]
    for k, r in enumerate(rs):
        b = GND if k == len(rs) - 1 else f"n{k + 1}"
        devs.append(Resistor(f"R{k}", f"n{k}", b, r))
    sol = dc_operating_point(Circuit("ladder", tuple(devs)))
    i = v / sum(rs)
    for k in range(1, len(rs)):
        assert sol[f"n{k}"] == pytest.approx(i * sum(rs[k:]), rel=1e-6, abs=1e-12)


def test_source_currents_sign():
    c = Circuit("r", (VoltageSource("V", "a", 1.0), Resistor("R", "a", GND, 1e3)))
    sim = Simulator(c)
    assert sim.source_currents(sim.dc())["a"] == pytest.approx(1e-3, rel=1e-9)


# ---------------------------------------------------------------- transient vs analytic RC


@pytest.mark.parametrize("method,n_per_tau,tol", [
    (Integration.TRAPEZOIDAL, 200, 1e-5),
    (Integration.BACKWARD_EULER, 500, 1e-3),
])
def test_rc_charging_matches_exponential(method, n_per_tau, tol):
    tau = 1e-9
    sim = Simulator(rc(), SimConfig(dt=tau / n_per_tau, t_end=3 * tau, integration=method))
    initial = sim.full_vector({"in": 1.0, "out": 0.0})
    t, data = sim.transient(probes=["out"], initial=initial, sources={"in": 1.0})
    want = 1.0 - np.exp(-t / tau)
    assert np.max(np.abs(data["out"] - want)) < tol


def test_trapezoidal_error_is_second_order():
    tau = 1e-9

    def err(n):
        sim = Simulator(rc(), SimConfig(dt=tau / n, t_end=tau))
        t, d = sim.transient(probes=["out"], initial=sim.full_vector({"in": 1.0}),
                             sources={"in": 1.0})
        return abs(d["out"][-1] - (1 - math.exp(-1)))

    ratio = err(50) / err(100)
    assert 3.5 < ratio < 4.5


def test_rc_source_current_probe_integrates_to_charge():
    tau = 1e-9
    sim = Simulator(rc(), SimConfig(dt=tau / 100, t_end=9 * tau))
    t, d = sim.transient(probes=["I(in)"], initial=sim.full_vector({"in": 1.0}),
                         sources={"in": 1.0})
    charge = float(np.sum(d["I(in)"][1:]) * (t[1] - t[0]))
    assert charge == pytest.approx(1e-13 * (1 - math.exp(-9)), rel=1e-4)


def test_pwl_stimulus_and_step_schedule():
    s = Stimulus.from_dict({"a": step_schedule(0.0, 0.7, 1e-11, 1e-11)})
    assert s.value("a", 0.0) == 0.0
    assert s.value("a", 1.5e-11) == pytest.approx(0.35)
    assert s.value("a", 1.0) == 0.7
    with pytest.raises(ValueError):
        Stimulus.from_dict({"a": [(1.0, 0.0), (0.5, 1.0)]})


def test_stimulus_on_non_source_node_rejected():
    with pytest.raises(SimulationError):
        transient(rc(), Stimulus.from_dict({"out": [(0.0, 1.0)]}), None, ["out"])


def test_unstimulated_sources_hold_their_initial_values():
    c = Circuit("two", (VoltageSource("Va", "a", 0.0), VoltageSource("Vb", "b", 0.0),
                        Resistor("R1", "a", "m", 1e3), Resistor("R2", "b", "m", 1e3),
                        Capacitor("C", "m", GND, 1e-15)))
    sim = Simulator(c, SimConfig(dt=1e-12, t_end=2e-11))
    init = sim.dc(sources={"a": 0.6, "b": 0.2})
    stim = Stimulus.from_dict({"a": [(0.0, 0.6)]})
    _, d = sim.transient(stim, ["m", "b"], initial=init)
    assert np.allclose(d["b"], 0.2)
    assert d["m"][-1] == pytest.approx(0.4, abs=1e-9)


# ---------------------------------------------------------------- nonlinear DC on logic


@pytest.mark.parametrize("name", [*corpus_names(), "invchain"])
def test_cold_start_dc_kcl_and_gmin(name, lib, cfg):
    sim = Simulator(ungated(load_bench(name), lib), cfg.sim)
    V = sim.dc()
    assert np.max(np.abs(sim.kcl_residual(V))) < 1e-12
    assert sim.gmin_shift() < 1e-3


def test_inverter_dc_levels(lib):
    c = ungated(inverter_chain_netlist(1, 2), lib)
    for vin, first, second in ((0.0, 0.7, 0.0), (0.7, 0.0, 0.7)):
        v = dc_operating_point(c.with_sources({"in0": vin}))
        assert v["c0_0"] == pytest.approx(first, abs=5e-3)
        assert v["c0_1"] == pytest.approx(second, abs=5e-3)


def test_dc_failure_reports_node():
    # a floating node with only a capacitor has no DC path; the solver must
    # either find a value or raise a DcFailure, never return garbage
    c = Circuit("float", (VoltageSource("V", "a", 1.0), Capacitor("C", "a", "x", 1e-15)))
    sim = Simulator(c, SimConfig(gmin=0.0))
    try:
        V = sim.dc()
    except DcFailure as exc:
        assert "DC" in str(exc)
    else:
        assert np.all(np.isfinite(V))


# ---------------------------------------------------------------- delay measurement


def _inverter_delay(lib, dt):
    c = ungated(inverter_chain_netlist(1, 2), lib)
    stim = Stimulus.from_dict({"in0": step_schedule(0.0, 0.7, 20e-12, 10e-12)})
    wfs = transient(c, stim, SimConfig(dt=dt, t_end=150e-12), ["in0", "c0_1"])
    return measure_delay(wfs, "in0", "c0_1", 0.35)


def test_delay_converges_under_dt_halving(lib):
    d1 = _inverter_delay(lib, 1e-12)
    d2 = _inverter_delay(lib, 0.5e-12)
    assert d1 > 0
    assert abs(d1 - d2) / d2 < 0.01


def test_transient_is_deterministic(lib):
    c = ungated(load_bench("invchain2x3"), lib)
    stim = Stimulus.from_dict({"in0": step_schedule(0.0, 0.7, 10e-12, 10e-12)})
    cfg = SimConfig(dt=1e-12, t_end=60e-12)
    a = transient(c, stim, cfg, ["c0_2", "I(VDD)"])
    b = transient(c, stim, cfg, ["c0_2", "I(VDD)"])
    for wa, wb in zip(a, b):
        assert np.array_equal(wa.v, wb.v)


def test_until_stops_early():
    sim = Simulator(rc(), SimConfig(dt=1e-11, t_end=1e-8))
    t, d = sim.transient(probes=["out"], initial=sim.full_vector({"in": 1.0}),
                         sources={"in": 1.0}, until=lambda t, v: v["out"] > 0.5)
    assert t[-1] < 1e-9 and d["out"][-1] > 0.5


def test_first_crossing_interpolates():
    wf = Waveform("x", [0.0, 1.0, 2.0], [0.0, 1.0, 0.0])
    assert first_crossing(wf, 0.25) == pytest.approx(0.25)
    assert first_crossing(wf, 0.25, direction=-1) == pytest.approx(1.75)
    assert first_crossing(wf, 0.25, t_start=0.5) == pytest.approx(1.75)
    with pytest.raises(NoCrossingError):
        first_crossing(wf, 2.0)


def test_waveform_validation():
    with pytest.raises(ValueError):
        Waveform("x", [0.0, 0.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        Waveform("x", [0.0], [1.0, 2.0])


def test_waveform_csv(tmp_path):
    wfs = [Waveform("a", [0.0, 1e-12], [0.0, 0.7]), Waveform("b", [0.0, 1e-12], [0.7, 0.0])]
    p = tmp_path / "w.csv"
    write_waveforms_csv(p, wfs, ["hello"])
    lines = p.read_text().splitlines()
    assert lines[0] == "# hello"
    assert lines[1] == "time_s,a,b"
    assert lines[3] == "1e-12,0.7,0.0"


def test_probe_of_unknown_node():
    with pytest.raises((SimulationError, KeyError)):
        transient(rc(), None, SimConfig(t_end=1e-11), ["nope"])


# ---------------------------------------------------------------- reference examples


def test_rc_discharge_at_one_time_constant():
    r, c = 1e6, 1e-15
    tau = r * c
    circ = Circuit("rc", (VoltageSource("V.in", "in", 0.0), Resistor("R1", "out", "in", r),
                          Capacitor("C1", "out", GND, c)))
    sim = Simulator(circ, SimConfig(dt=tau / 100, t_end=5 * tau))
    t, d = sim.transient(probes=["out"], initial=sim.full_vector({"out": 0.35}))
    assert t[0] == 0.0 and t[-1] == pytest.approx(5 * tau)
    assert np.allclose(np.diff(t), tau / 100)
    v_tau = np.interp(tau, t, d["out"])
    assert v_tau == pytest.approx(0.35 / math.e, rel=5e-3)
    assert d["out"][-1] == pytest.approx(0.35 * math.exp(-5), rel=5e-3)


def test_constant_stimulus_stays_at_dc(lib):
    c = ungated(inverter_chain_netlist(1, 3), lib)
    sim = Simulator(c, SimConfig(dt=1e-12, t_end=30e-12))
    V = sim.dc()
    _, d = sim.transient(Stimulus.from_dict({"in0": [(0.0, 0.0)]}), ["c0_0", "c0_1", "c0_2"])
    for node in ("c0_0", "c0_1", "c0_2"):
        assert np.max(np.abs(d[node] - V[sim.index[node]])) < 1e-6


def test_inverter_chain_stage_crossings_increase(lib):
    c = ungated(inverter_chain_netlist(1, 20), lib)
    nodes = [f"c0_{j}" for j in range(20)]
    stim = Stimulus.from_dict({"in0": step_schedule(0.0, 0.7, 10e-12, 10e-12)})
    wfs = transient(c, stim, SimConfig(dt=1e-12, t_end=250e-12), nodes)
    times = [first_crossing(w, 0.35, 10e-12) for w in wfs]
    assert all(b > a for a, b in zip(times, times[1:]))


def test_measure_delay_on_synthetic_shift():
    dt = 1e-12
    t = np.arange(200) * dt
    v = np.clip((t - 20e-12) / 30e-12, 0.0, 1.0) * 0.7
    shifted = np.interp(t - 10 * dt, t, v, left=0.0)
    wfs = [Waveform("a", t, v), Waveform("b", t, shifted)]
    assert measure_delay(wfs, "a", "a", 0.35) == 0.0
    assert measure_delay(wfs, "a", "b", 0.35) == pytest.approx(10 * dt, abs=dt / 100)
    with pytest.raises(NoCrossingError):
        measure_delay(wfs + [Waveform("f", t, np.zeros_like(t))], "a", "f", 0.35)


def test_diode_connected_divider_midpoint(lib):
    n = lib.mos.nmos
    c = Circuit("div", (VoltageSource("V", VDD, 0.7),
                        Mosfet("M1", VDD, VDD, "mid", "mid", n),
                        Mosfet("M2", "mid", "mid", GND, GND, n)))
    assert dc_operating_point(c)["mid"] == pytest.approx(0.35, abs=1e-3)


def test_inverter_pulls_output_low(lib):
    c = ungated(inverter_chain_netlist(1, 1), lib).with_sources({"in0": 0.7})
    assert dc_operating_point(c)["c0_0"] < 0.05
