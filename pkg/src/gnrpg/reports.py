"""CSV tables and hand-written SVG plots.

CSV is the normative output. Every file starts with ``#`` comment lines
carrying the config fingerprint and seed. SVG plots are rendered from the
parsed CSV rows alone, so a plot can always be regenerated from its table.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import fields
from typing import Iterable, Sequence

from .power_gating import MetricsReport, PgKind, normalized_reduction

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf",
           "#7f7f7f")


def fmt(x) -> str:
    """Stable text form: floats via repr (shortest round-trip), None/NaN empty."""
    if x is None:
        return ""
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return str(x)


def header_lines(command: str, fingerprint: str, seed: int, extra: Sequence[str] = ()) -> list[str]:
    return [f"gnrpg {command}", f"config_fingerprint: {fingerprint}", f"seed: {seed}", *extra]


def csv_text(columns: Sequence[str], rows: Iterable[Sequence], header: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(columns)
    for r in rows:
        wr.writerow([fmt(v) for v in r])
    return buf.getvalue()


def write_text(path, text: str):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def read_csv(text: str) -> tuple[list[str], list[dict[str, str]], list[str]]:
    """Parse CSV text written by :func:`csv_text` into (columns, rows, header)."""
    header = []
    body = []
    for line in text.splitlines():
        if line.startswith("#") and not body:
            header.append(line[1:].strip())
        else:
            body.append(line)
    rd = csv.reader(body)
    cols = next(rd)
    rows = [dict(zip(cols, r)) for r in rd if r]
    return cols, rows, header


def to_float(s: str) -> float | None:
    try:
        return float(s) if s != "" else None
    except ValueError:
        return None


# --------------------------------------------------------------------------
# metrics tables

METRIC_COLUMNS = ("leakage_w", "delay_s", "wakeup_s", "pdp_j")
REPORT_COLUMNS = ("benchmark", "structure", "leakage_w", "leakage_normalized", "delay_s",
                  "delay_normalized", "wakeup_s", "wakeup_normalized", "active_power_w", "pdp_j",
                  "pdp_normalized", "vgnr_sleep_v", "switch_width_nm", "fingerprint", "error")


def comparison_rows(reports: Sequence[MetricsReport], reference: str = PgKind.MOSPG.value):
    """Rows for the comparison table. ``*_normalized`` columns hold the
    fractional reduction against ``reference`` on the same benchmark; an
    ``Average`` row per structure closes the table."""
    ref = {r.benchmark: r for r in reports if r.structure == reference and r.error is None}
    rows = []
    for r in reports:
        base = ref.get(r.benchmark)
        norm = {m: (normalized_reduction(getattr(r, m), getattr(base, m)) if base else math.nan)
                for m in METRIC_COLUMNS}
        rows.append([r.benchmark, r.structure, r.leakage_w, norm["leakage_w"], r.delay_s,
                     norm["delay_s"], r.wakeup_s, norm["wakeup_s"], r.active_power_w, r.pdp_j,
                     norm["pdp_j"], r.vgnr_sleep_v, r.switch_width_nm, r.fingerprint,
                     r.error or ""])
    structures = list(dict.fromkeys(r.structure for r in reports))
    for s in structures:
        mine = [row for row in rows if row[1] == s]
        avg = ["Average", s]
        for j in range(2, 13):
            vals = [row[j] for row in mine if isinstance(row[j], float) and math.isfinite(row[j])]
            avg.append(sum(vals) / len(vals) if vals else math.nan)
        avg += [mine[0][13] if mine else "", ""]
        rows.append(avg)
    return rows


def metrics_csv(reports: Sequence[MetricsReport], header: Sequence[str] = ()) -> str:
    return csv_text(REPORT_COLUMNS, comparison_rows(reports), header)


def metrics_report_csv(reports: Sequence[MetricsReport], header: Sequence[str] = ()) -> str:
    """Plain per-cell dump of :class:`MetricsReport` fields."""
    cols = [f.name for f in fields(MetricsReport)]
    return csv_text(cols, ([getattr(r, c) for c in cols] for r in reports), header)


# --------------------------------------------------------------------------
# SVG primitives


def _esc(s: str) -> str:
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * k / (n - 1) for k in range(n)]


def _tick_label(v: float, log: bool) -> str:
    return f"1e{int(round(v))}" if log else f"{v:.3g}"


class _Frame:
    W, H, L, R, T, B = 640, 400, 80, 160, 40, 60

    def __init__(self, title, xlabel, ylabel, xr, yr, log_y):
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.x0, self.x1 = xr
        self.y0, self.y1 = yr
        if self.x1 == self.x0:
            self.x0, self.x1 = self.x0 - 1, self.x1 + 1
        if self.y1 == self.y0:
            self.y0, self.y1 = self.y0 - 1, self.y1 + 1
        self.log_y = log_y
        self.parts = []

    def px(self, x):
        w = self.W - self.L - self.R
        return self.L + (x - self.x0) / (self.x1 - self.x0) * w

    def py(self, y):
        h = self.H - self.T - self.B
        return self.T + h - (y - self.y0) / (self.y1 - self.y0) * h

    def axes(self, xticks=None, xlabels=None):
        p = self.parts
        p.append(f'<rect x="{self.L}" y="{self.T}" width="{self.W - self.L - self.R}" '
                 f'height="{self.H - self.T - self.B}" fill="none" stroke="#333"/>')
        p.append(f'<text x="{self.W / 2:.1f}" y="22" text-anchor="middle" font-size="14">'
                 f'{_esc(self.title)}</text>')
        p.append(f'<text x="{(self.L + self.W - self.R) / 2:.1f}" y="{self.H - 15}" '
                 f'text-anchor="middle" font-size="12">{_esc(self.xlabel)}</text>')
        p.append(f'<text x="18" y="{(self.T + self.H - self.B) / 2:.1f}" text-anchor="middle" '
                 f'font-size="12" transform="rotate(-90 18 {(self.T + self.H - self.B) / 2:.1f})">'
                 f'{_esc(self.ylabel)}</text>')
        for y in _ticks(self.y0, self.y1):
            p.append(f'<text x="{self.L - 6}" y="{self.py(y) + 4:.1f}" text-anchor="end" '
                     f'font-size="10">{_tick_label(y, self.log_y)}</text>')
        xs = xticks if xticks is not None else _ticks(self.x0, self.x1)
        for i, x in enumerate(xs):
            label = xlabels[i] if xlabels else f"{x:.3g}"
            p.append(f'<text x="{self.px(x):.1f}" y="{self.H - self.B + 16}" '
                     f'text-anchor="middle" font-size="10">{_esc(label)}</text>')

    def legend(self, names):
        for i, n in enumerate(names):
            y = self.T + 14 + 18 * i
            x = self.W - self.R + 12
            col = PALETTE[i % len(PALETTE)]
            self.parts.append(f'<rect x="{x}" y="{y - 9}" width="12" height="12" fill="{col}"/>')
            self.parts.append(f'<text x="{x + 18}" y="{y + 1}" font-size="11">{_esc(n)}</text>')

    def svg(self, notes: Sequence[str] = ()) -> str:
        body = "\n".join(self.parts)
        # "--" may not appear inside an XML comment
        meta = "".join(f"<!-- {n.replace('--', '- -')} -->\n" for n in notes)
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.W}" height="{self.H}" '
                f'viewBox="0 0 {self.W} {self.H}">\n{meta}'
                f'<rect width="100%" height="100%" fill="white"/>\n{body}\n</svg>\n')


def _yval(v, log):
    if v is None:
        return None
    if log:
        return math.log10(v) if v > 0 else None
    return v


def svg_line_plot(series: dict[str, list[tuple[float, float]]], title: str, xlabel: str,
                  ylabel: str, log_y: bool = False, notes: Sequence[str] = ()) -> str:
    """One polyline per named series of (x, y) points; ``notes`` become
    XML comments at the top of the document."""
    pts = {k: [(x, _yval(y, log_y)) for x, y in v if y is not None] for k, v in series.items()}
    pts = {k: [(x, y) for x, y in v if y is not None] for k, v in pts.items()}
    xs = [x for v in pts.values() for x, _ in v] or [0.0, 1.0]
    ys = [y for v in pts.values() for _, y in v] or [0.0, 1.0]
    fr = _Frame(title, xlabel, ylabel, (min(xs), max(xs)), (min(ys), max(ys)), log_y)
    fr.axes()
    for i, (name, v) in enumerate(pts.items()):
        col = PALETTE[i % len(PALETTE)]
        if len(v) > 1:
            path = " ".join(f"{fr.px(x):.2f},{fr.py(y):.2f}" for x, y in v)
            fr.parts.append(f'<polyline fill="none" stroke="{col}" stroke-width="1.5" points="{path}"/>')
        for x, y in v:
            fr.parts.append(f'<circle cx="{fr.px(x):.2f}" cy="{fr.py(y):.2f}" r="2.5" fill="{col}"/>')
    fr.legend(list(pts))
    return fr.svg(notes)


def svg_bar_chart(groups: list[str], series: dict[str, list[float | None]], title: str,
                  ylabel: str, log_y: bool = False, notes: Sequence[str] = ()) -> str:
    """Grouped bars: one group per category, one bar per series."""
    vals = {k: [_yval(v, log_y) for v in vs] for k, vs in series.items()}
    flat = [v for vs in vals.values() for v in vs if v is not None] or [0.0, 1.0]
    lo = min(flat) if log_y else min(0.0, min(flat))
    hi = max(flat)
    if log_y:
        lo = math.floor(lo)
        hi = math.ceil(hi)
    n = max(len(groups), 1)
    fr = _Frame(title, "", ylabel, (0.0, float(n)), (lo, hi), log_y)
    fr.axes([g + 0.5 for g in range(n)], groups)
    k = max(len(vals), 1)
    bw = 0.8 / k
    for j, (name, vs) in enumerate(vals.items()):
        col = PALETTE[j % len(PALETTE)]
        for g, v in enumerate(vs):
            if v is None:
                continue
            x = fr.px(g + 0.1 + j * bw)
            w = fr.px(g + 0.1 + (j + 1) * bw) - x
            y_top, y_bot = fr.py(max(v, lo)), fr.py(lo)
            fr.parts.append(f'<rect x="{x:.2f}" y="{min(y_top, y_bot):.2f}" width="{w:.2f}" '
                            f'height="{abs(y_bot - y_top):.2f}" fill="{col}"/>')
    fr.legend(list(vals))
    return fr.svg(notes)


# --------------------------------------------------------------------------
# CSV -> SVG views


def svg_from_table(text: str, x: str, ys: Sequence[str], title: str, ylabel: str,
                   group: str | None = None, log_y: bool = False,
                   groups: Sequence[str] | None = None) -> str:
    """Line plot of columns ``ys`` against ``x``; with ``group`` set, one
    series per distinct value of that column (only the first y column),
    optionally restricted to the values in ``groups``. The CSV header
    comments are carried over into the SVG."""
    _, rows, header = read_csv(text)
    series: dict[str, list] = {}
    if group:
        for r in rows:
            xv, yv = to_float(r[x]), to_float(r[ys[0]])
            if xv is not None and (groups is None or r[group] in groups):
                series.setdefault(f"{group}={r[group]}", []).append((xv, yv))
    else:
        for col in ys:
            series[col] = [(to_float(r[x]), to_float(r[col])) for r in rows
                           if to_float(r[x]) is not None]
    return svg_line_plot(series, title, x, ylabel, log_y, header)


def svg_bars_from_table(text: str, category: str, series_col: str, value: str, title: str,
                        log_y: bool = False, skip: Sequence[str] = ("Average",)) -> str:
    _, rows, header = read_csv(text)
    rows = [r for r in rows if r[category] not in skip]
    groups = list(dict.fromkeys(r[category] for r in rows))
    names = list(dict.fromkeys(r[series_col] for r in rows))
    table = {(r[category], r[series_col]): to_float(r[value]) for r in rows}
    series = {n: [table.get((g, n)) for g in groups] for n in names}
    return svg_bar_chart(groups, series, title, value, log_y, header)
