"""``gnrpg`` command-line interface.

Exit codes: 0 success, 1 simulation failure, 2 configuration or parse error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

from .circuit_sim import SimulationError, write_waveforms_csv
from .config import ConfigError, RunConfig, load_config
from .device_models import BiasPoint, GnrDevice, gnr_device_current, mos_ids
from .netlist import NetlistError, corpus_names, load_bench, read_bench
from .power_gating import (PgKind, PgMode, PowerGatingError, SweepParam, build_module,
                           compare_structures, find_sensitized_path, leakage_vectors, mean_leakage,
                           measure_active_metrics, run_cell, sweep_device_param, vgnr_level)
from .reports import (csv_text, header_lines, metrics_csv, metrics_report_csv, svg_bars_from_table,
                      svg_from_table, write_text)
from .validate import run_all

EXIT_OK, EXIT_SIM, EXIT_CONFIG = 0, 1, 2


class UsageError(ValueError):
    """Bad command-line selection (unknown benchmark, structure or mode)."""


# --------------------------------------------------------------------------
# selections


def resolve_benchmarks(arg: str | None, cfg: RunConfig):
    """``None`` -> the config's list, ``all`` -> corpus plus inverter chain,
    otherwise comma-separated names or ``.bench`` paths."""
    if arg is None:
        names = list(cfg.run.benchmarks)
    elif arg == "all":
        names = ["invchain", *corpus_names()]
    else:
        names = [n.strip() for n in arg.split(",") if n.strip()]
    out = []
    for n in names:
        if n.endswith(".bench"):
            out.append(read_bench(n))
        else:
            out.append(load_bench(n))
    return out


def resolve_structures(arg: str | None, cfg: RunConfig):
    names = list(cfg.run.structures) if arg in (None, "all") else [
        s.strip() for s in arg.split(",") if s.strip()]
    try:
        return [cfg.structure(s) for s in names]
    except ValueError:
        valid = ", ".join(k.value for k in PgKind)
        raise UsageError(f"unknown structure in {names}; choose from {valid}") from None


def _header(cmd: str, cfg: RunConfig, extra: Sequence[str] = ()) -> list[str]:
    return header_lines(cmd, cfg.fingerprint(), cfg.harness.seed, extra)


def _emit(out: Path, name: str, text: str) -> Path:
    path = out / name
    write_text(path, text)
    return path


def _fmt_list(xs) -> str:
    return ",".join(str(x) for x in xs)


# --------------------------------------------------------------------------
# iv-sweep


def iv_grid(cfg: RunConfig, v_max: float = 0.7, step: float = 0.025):
    """Drain-current grids for the table GNRFET and the module NMOS at the
    same gate width. Returns ``{family: rows}`` with rows (v_gs, v_ds, i_ds)."""
    dev = GnrDevice.build(cfg.device.geometry(), cfg.device.n0_per_ribbon, cfg.device.subbands,
                          cfg.device.temperature_k)
    nmos = cfg.mos_pair().nmos.with_(width=dev.geom.w_g)
    n = int(round(v_max / step))
    volts = [round(k * step, 9) for k in range(n + 1)]
    grids = {"GNRFET": [], "MOSFET": []}
    for vg in volts:
        for vd in volts:
            b = BiasPoint(v_g=vg, v_d=vd)
            grids["GNRFET"].append((vg, vd, gnr_device_current(dev, b)))
            grids["MOSFET"].append((vg, vd, mos_ids(nmos, b)))
    return grids


def on_off_summary(cfg: RunConfig, biases: Sequence[float] = (0.35, 0.7)):
    """Rows (family, v_bias, i_on, i_off, ratio, ratio over MOSFET)."""
    dev = GnrDevice.build(cfg.device.geometry(), cfg.device.n0_per_ribbon, cfg.device.subbands,
                          cfg.device.temperature_k)
    nmos = cfg.mos_pair().nmos.with_(width=dev.geom.w_g)
    rows = []
    for v in biases:
        g_on = gnr_device_current(dev, BiasPoint(v_g=v, v_d=v))
        g_off = gnr_device_current(dev, BiasPoint(v_g=0.0, v_d=v))
        m_on = mos_ids(nmos, BiasPoint(v_g=v, v_d=v))
        m_off = mos_ids(nmos, BiasPoint(v_g=0.0, v_d=v))
        m_ratio = m_on / m_off
        rows.append(["GNRFET", v, g_on, g_off, g_on / g_off, (g_on / g_off) / m_ratio])
        rows.append(["MOSFET", v, m_on, m_off, m_ratio, 1.0])
    return rows


def cmd_iv_sweep(args, cfg: RunConfig, out: Path) -> int:
    grids = iv_grid(cfg, args.v_max, args.step)
    cols = ["v_gs", "v_ds", "i_ds_a"]
    for fam, rows in grids.items():
        hdr = _header("iv-sweep", cfg, [f"family: {fam}", "gate width matched to the GNRFET"])
        text = csv_text(cols, rows, hdr)
        _emit(out, f"iv_{fam.lower()}.csv", text)
        shown = sorted({r[0] for r in rows if abs(round(r[0] / 0.1) * 0.1 - r[0]) < 1e-9})
        _emit(out, f"iv_{fam.lower()}.svg",
              svg_from_table(text, "v_ds", ["i_ds_a"], f"{fam} drain current", "I_DS (A)",
                             group="v_gs", groups=[repr(float(v)) for v in shown]))
    summary = on_off_summary(cfg)
    text = csv_text(["family", "v_bias", "i_on_a", "i_off_a", "on_off_ratio",
                     "ratio_over_mosfet"], summary, _header("iv-sweep", cfg))
    _emit(out, "iv_summary.csv", text)
    for r in summary:
        if r[0] == "GNRFET":
            print(f"V = {r[1]} V: GNRFET I_ON/I_OFF = {r[4]:.3e}, {r[5]:.1f}x the MOSFET's")
    return EXIT_OK


# --------------------------------------------------------------------------
# param-sweep


_SWEEP_VALUES = {
    SweepParam.DIMER_LINES: lambda c: c.sweep.dimer_values,
    SweepParam.RIBBON_COUNT: lambda c: c.sweep.ribbon_values,
    SweepParam.SPACING: lambda c: c.sweep.spacing_values,
}


def cmd_param_sweep(args, cfg: RunConfig, out: Path) -> int:
    params = list(SweepParam) if args.param == "all" else [SweepParam(args.param)]
    bench = args.bench or cfg.sweep.module
    nl = resolve_benchmarks(bench, cfg)[0]
    status = EXIT_OK
    for p in params:
        values = _SWEEP_VALUES[p](cfg)
        rows = sweep_device_param(nl, p, values, cfg.library(), cfg.sim, cfg.harness_settings(),
                                  base=cfg.sweep_base(), ratio=cfg.sweep.ratio)
        hdr = _header("param-sweep", cfg, [f"benchmark: {nl.name}", f"parameter: {p.value}"])
        text = csv_text(["value", "delay_s", "leakage_w", "error"],
                        [[r.value, r.delay_s, r.leakage_w, r.error or ""] for r in rows], hdr)
        stem = f"sweep_{p.value.lower()}"
        _emit(out, f"{stem}.csv", text)
        _emit(out, f"{stem}_delay.svg",
              svg_from_table(text, "value", ["delay_s"], f"Delay vs {p.value}", "delay (s)"))
        _emit(out, f"{stem}_leakage.svg",
              svg_from_table(text, "value", ["leakage_w"], f"Leakage vs {p.value}",
                             "leakage (W)", log_y=True))
        for r in rows:
            print(f"{p.value}={r.value:g}: delay={r.delay_s} leakage={r.leakage_w}"
                  + (f" ({r.error})" if r.error else ""))
        if any(r.delay_s is None and r.leakage_w is None for r in rows):
            status = EXIT_SIM
    return status


# --------------------------------------------------------------------------
# run / compare


def cmd_run(args, cfg: RunConfig, out: Path) -> int:
    benches = resolve_benchmarks(args.bench, cfg)
    structures = resolve_structures(args.structure, cfg)
    lib, h = cfg.library(), cfg.harness_settings()
    reports, mode_rows = [], []
    for nl in benches:
        vecs = leakage_vectors(len(nl.inputs), h.seed, h.leakage_random_vectors)
        for pg in structures:
            rep = run_cell(nl, pg, lib, cfg.sim, h, cfg.fingerprint())
            reports.append(rep)
            print(f"{nl.name} {pg.kind.value}: " + (f"FAILED {rep.error}" if rep.error else
                  f"leakage={rep.leakage_w:.4e} W delay={rep.delay_s:.4e} s "
                  f"wakeup={rep.wakeup_s:.4e} s pdp={rep.pdp_j:.4e} J"))
            m = build_module(nl, pg, lib, h.vcc, h.c_load)
            modes = pg.modes if args.mode is None else [PgMode(args.mode)]
            for md in modes:
                if md not in pg.modes:
                    raise UsageError(f"{pg.kind.value} has no {md.value} mode")
                try:
                    mode_rows.append([nl.name, pg.kind.value, md.value,
                                      mean_leakage(m, md, vecs, cfg.sim),
                                      vgnr_level(m, md, vecs[0], cfg.sim), ""])
                except SimulationError as exc:
                    mode_rows.append([nl.name, pg.kind.value, md.value, None, None, str(exc)])
            if args.waveforms and not rep.error:
                path = find_sensitized_path(nl, h.seed)
                act = measure_active_metrics(m, path, cfg.sim, h.t_edge, h.input_rise,
                                             h.delay_t_max)
                write_waveforms_csv(out / f"waves_{nl.name}_{pg.kind.value}.csv", act.waveforms,
                                    _header("run", cfg, [f"benchmark: {nl.name}",
                                                         f"structure: {pg.kind.value}",
                                                         f"input: {path.input}",
                                                         f"output: {path.output}"]))
    _emit(out, "run_metrics.csv", metrics_report_csv(reports, _header("run", cfg)))
    _emit(out, "run_modes.csv", csv_text(["benchmark", "structure", "mode", "leakage_w",
                                          "vgnr_v", "error"], mode_rows, _header("run", cfg)))
    failed = any(r.error for r in reports) or any(r[5] for r in mode_rows)
    return EXIT_SIM if failed else EXIT_OK


_BAR_METRICS = (("leakage_w", "Standby leakage", True), ("delay_s", "Active delay", False),
                ("wakeup_s", "Wake-up time", True), ("pdp_j", "Power-delay product", False))


def cmd_compare(args, cfg: RunConfig, out: Path) -> int:
    benches = resolve_benchmarks(args.bench, cfg)
    structures = resolve_structures(args.structure, cfg)
    reports = compare_structures(benches, structures, cfg.library(), cfg.sim,
                                 cfg.harness_settings(), cfg.fingerprint(), cfg.run.workers)
    hdr = _header("compare", cfg, [f"benchmarks: {_fmt_list(n.name for n in benches)}",
                                   "normalized columns: fractional reduction against MOSPG"])
    text = metrics_csv(reports, hdr)
    _emit(out, "compare.csv", text)
    for col, title, log in _BAR_METRICS:
        _emit(out, f"compare_{col}.svg",
              svg_bars_from_table(text, "benchmark", "structure", col, title, log_y=log))
    for r in reports:
        print(f"{r.benchmark} {r.structure}: " + (f"FAILED {r.error}" if r.error else
              f"leakage={r.leakage_w:.4e} delay={r.delay_s:.4e} wakeup={r.wakeup_s:.4e}"))
    return EXIT_SIM if any(r.error for r in reports) else EXIT_OK


# --------------------------------------------------------------------------
# validate


def cmd_validate(args, cfg: RunConfig, out: Path | None) -> int:
    bench_dir = Path(args.bench_dir) if args.bench_dir else None
    if bench_dir is not None and not bench_dir.is_dir():
        raise UsageError(f"bench directory {bench_dir} does not exist")
    results = run_all(cfg, bench_dir, full=args.full)
    for r in results:
        print(r.line())
    n_fail = sum(not r.passed for r in results)
    print(f"{len(results) - n_fail}/{len(results)} checks passed")
    return EXIT_OK if n_fail == 0 else EXIT_SIM


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration (defaults when omitted)")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, help="override the harness seed")

    sel = argparse.ArgumentParser(add_help=False)
    sel.add_argument("--bench", help="benchmark name(s), comma-separated, .bench path, or 'all'")
    sel.add_argument("--structure", help="power-gating structure(s), comma-separated, or 'all'")

    p = argparse.ArgumentParser(prog="gnrpg", description="GNRFET power-gating simulator")
    sub = p.add_subparsers(dest="command", required=True)

    iv = sub.add_parser("iv-sweep", parents=[common], help="GNRFET vs MOSFET I-V grids")
    iv.add_argument("--v-max", type=float, default=0.7, help="grid upper voltage (V)")
    iv.add_argument("--step", type=float, default=0.025, help="grid step (V)")

    ps = sub.add_parser("param-sweep", parents=[common], help="GNR switch parameter sweeps")
    ps.add_argument("--param", default="all", choices=["all", *(s.value for s in SweepParam)])
    ps.add_argument("--bench", help="module to gate (default: sweep.module from the config)")

    run = sub.add_parser("run", parents=[common, sel], help="metrics and per-mode leakage")
    run.add_argument("--mode", choices=[m.value for m in PgMode],
                     help="report only this mode in the per-mode table")
    run.add_argument("--waveforms", action="store_true",
                     help="also write the delay-measurement waveforms")

    sub.add_parser("compare", parents=[common, sel], help="structure comparison tables")

    val = sub.add_parser("validate", parents=[common], help="run the invariant checks")
    val.add_argument("--bench-dir", help="check .bench files in this directory instead")
    val.add_argument("--full", action="store_true",
                     help="run the gating orderings on every corpus benchmark")
    return p


_COMMANDS = {"iv-sweep": cmd_iv_sweep, "param-sweep": cmd_param_sweep, "run": cmd_run,
             "compare": cmd_compare, "validate": cmd_validate}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](args, cfg, out)
    except (ConfigError, NetlistError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationError, PowerGatingError) as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_SIM


if __name__ == "__main__":
    sys.exit(main())
