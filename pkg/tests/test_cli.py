import shutil
from pathlib import Path

import pytest

from gnrpg.cli import EXIT_CONFIG, EXIT_OK, EXIT_SIM, iv_grid, main, on_off_summary
from gnrpg.config import RunConfig
from gnrpg.netlist import corpus_names
from gnrpg.reports import read_csv

BENCH_DIR = Path(__file__).resolve().parents[1] / "src" / "gnrpg" / "benches"


def _fingerprinted(path: Path, cfg: RunConfig, seed: int):
    text = path.read_text()
    assert f"config_fingerprint: {cfg.with_seed(seed).fingerprint()}" in text, path.name
    assert f"seed: {seed}" in text, path.name


def test_iv_sweep_outputs(tmp_path, capsys):
    assert main(["iv-sweep", "--out", str(tmp_path), "--seed", "5"]) == EXIT_OK
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["iv_gnrfet.csv", "iv_gnrfet.svg", "iv_mosfet.csv", "iv_mosfet.svg",
                     "iv_summary.csv"]
    for p in tmp_path.iterdir():
        _fingerprinted(p, RunConfig(), 5)
    cols, rows, _ = read_csv((tmp_path / "iv_gnrfet.csv").read_text())
    assert cols == ["v_gs", "v_ds", "i_ds_a"] and len(rows) == 29 * 29
    assert all(r["i_ds_a"] not in ("", "nan", "inf") for r in rows)
    assert "I_ON/I_OFF" in capsys.readouterr().out


def test_iv_grid_and_on_off(cfg):
    g = iv_grid(cfg, v_max=0.35, step=0.05)
    assert len(g["GNRFET"]) == len(g["MOSFET"]) == 64
    gnr = next(r for r in on_off_summary(cfg) if r[0] == "GNRFET" and r[1] == 0.35)
    assert gnr[4] >= 1e3 and gnr[5] >= 10


def test_param_sweep_spacing(tmp_path):
    cfg_path = tmp_path / "cfg.yaml"
    cfg_path.write_text("sweep:\n  module: invchain2x3\n  base_n_rib: 2\n"
                        "  spacing_values: [4.0, 10.0]\n")
    out = tmp_path / "out"
    rc = main(["param-sweep", "--param", "Spacing", "--config", str(cfg_path), "--out", str(out)])
    assert rc == EXIT_OK
    cols, rows, hdr = read_csv((out / "sweep_spacing.csv").read_text())
    assert [float(r["value"]) for r in rows] == [4.0, 10.0]
    d = [float(r["delay_s"]) for r in rows]
    assert max(d) / min(d) < 1.1
    assert (out / "sweep_spacing_delay.svg").exists()
    assert (out / "sweep_spacing_leakage.svg").exists()


def test_run_with_mode_and_waveforms(tmp_path):
    rc = main(["run", "--bench", "c17", "--structure", "GMCPG_SS", "--mode", "Sleep",
               "--waveforms", "--out", str(tmp_path)])
    assert rc == EXIT_OK
    _, rows, _ = read_csv((tmp_path / "run_modes.csv").read_text())
    assert [r["mode"] for r in rows] == ["Sleep"]
    _, metrics, _ = read_csv((tmp_path / "run_metrics.csv").read_text())
    assert metrics[0]["benchmark"] == "c17" and metrics[0]["error"] == ""
    waves = (tmp_path / "waves_c17_GMCPG_SS.csv").read_text().splitlines()
    cols = next(line for line in waves if not line.startswith("#"))
    assert cols.startswith("time_s,") and "I(VDD)" in cols


def test_compare_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["compare", "--bench", "c17", "--structure", "MOSPG,GMCPG_SS", "--seed", "11"]
    assert main(args + ["--out", str(a)]) == EXIT_OK
    assert main(args + ["--out", str(b)]) == EXIT_OK
    for p in a.iterdir():
        assert p.read_bytes() == (b / p.name).read_bytes(), p.name
        _fingerprinted(p, RunConfig(), 11)
    cols, rows, _ = read_csv((a / "compare.csv").read_text())
    assert "leakage_normalized" in cols
    assert [r["benchmark"] for r in rows] == ["c17", "c17", "Average", "Average"]
    assert float(rows[1]["leakage_normalized"]) > 0


@pytest.mark.parametrize("argv", [
    ["run", "--bench", "nosuchbench"],
    ["run", "--bench", "c17", "--structure", "BOGUS"],
    ["compare", "--config", "/nonexistent.yaml"],
    ["frobnicate"],
    ["iv-sweep", "--step", "abc"],
    ["run", "--bench", "c17", "--structure", "GMCPG_SS", "--mode", "Nap"],
])
def test_usage_errors_exit_2(tmp_path, argv, capsys):
    assert main(argv + ["--out", str(tmp_path)]) == EXIT_CONFIG


def test_bad_config_reports_line(tmp_path, capsys):
    p = tmp_path / "c.yaml"
    p.write_text("sim:\n  dt: 1e-12\n  wrong: 1\n")
    assert main(["iv-sweep", "--config", str(p), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert f"{p}:3" in capsys.readouterr().err


def test_malformed_bench_path_exits_2(tmp_path, capsys):
    p = tmp_path / "broken.bench"
    p.write_text("INPUT(a)\nOUTPUT(y)\ny = NAND(a,\n")
    assert main(["run", "--bench", str(p), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert f"{p}: line 3" in capsys.readouterr().err


def test_simulation_failure_exits_1(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("sim:\n  max_newton_iters: 1\n  source_steps: 1\n")
    rc = main(["run", "--bench", "c17", "--structure", "GMCPG_SS", "--config", str(p),
               "--out", str(tmp_path)])
    assert rc == EXIT_SIM


def test_validate_flags_corrupted_bench(tmp_path, capsys):
    for name in corpus_names():
        shutil.copy(BENCH_DIR / f"{name}.bench", tmp_path / f"{name}.bench")
    (tmp_path / "c17.bench").write_text(
        (BENCH_DIR / "c17.bench").read_text().replace("NAND(N1, N3)", "NAND(N1, N3"))
    rc = main(["validate", "--bench-dir", str(tmp_path), "--out", str(tmp_path / "o")])
    out = capsys.readouterr().out
    assert rc == EXIT_SIM
    failed = [line for line in out.splitlines() if line.startswith("[FAIL]")]
    assert failed and all("c17" in line for line in failed)
    assert "[PASS]" in out
