from gnrpg.circuit import GND, VGNR, Circuit, Mosfet
from gnrpg.device_models import Chirality, classify_chirality
from gnrpg.netlist import load_bench, parse_bench
from gnrpg.validate import (CheckResult, bench_checks, boolean_oracle, device_checks,
                            expected_device_count, pulldown_problems, report_checks,
                            tight_binding_gap_closes)


def test_check_result_line():
    assert CheckResult("x", True, "ok").line() == "[PASS] x: ok"
    assert CheckResult("y", False).line() == "[FAIL] y"


def test_gap_oracle_agrees_with_classifier():
    for n in range(3, 61):
        metallic = classify_chirality(n) is Chirality.METALLIC
        assert tight_binding_gap_closes(n) == metallic == (n % 3 == 2)


def test_boolean_oracle_on_xor():
    nl = parse_bench("INPUT(a)\nINPUT(b)\nINPUT(c)\nOUTPUT(y)\ny = XOR(a, b, c)\n")
    assert boolean_oracle(nl, {"a": True, "b": True, "c": True}) == {"y": True}
    assert boolean_oracle(nl, {"a": True, "b": True, "c": False}) == {"y": False}


def test_expected_device_count():
    nl = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(y)\nOUTPUT(z)\n"
                     "y = AND(a, b)\nz = XNOR(a, b)\n")
    assert expected_device_count(nl) == 6 + 18
    assert expected_device_count(load_bench("c17")) == 24


def test_pulldown_problems_detects_short_to_ground(lib):
    n = lib.mos.nmos
    good = Circuit("g", (Mosfet("MN1", "out", "in", VGNR, GND, n),))
    bad = Circuit("b", (Mosfet("MN1", "out", "in", GND, GND, n),))
    assert pulldown_problems(good) == []
    assert pulldown_problems(bad)


def test_device_checks_pass(cfg):
    results = device_checks(cfg)
    assert results and all(r.passed for r in results), [r.line() for r in results]


def test_bench_checks_pass_on_corpus():
    results = bench_checks()
    assert len(results) == 8 and all(r.passed for r in results), [r.line() for r in results]


def test_bench_checks_flag_broken_file(tmp_path):
    (tmp_path / "ok.bench").write_text("INPUT(a)\nOUTPUT(y)\ny = NOT(a)\n")
    (tmp_path / "bad.bench").write_text("INPUT(a)\nOUTPUT(y)\ny = NOT(q)\n")
    res = {r.name: r for r in bench_checks(sorted(tmp_path.glob("*.bench")))}
    assert res["bench ok"].passed
    assert not res["bench bad"].passed and "q" in res["bench bad"].detail


def test_report_checks_pass(cfg):
    assert all(r.passed for r in report_checks(cfg))
