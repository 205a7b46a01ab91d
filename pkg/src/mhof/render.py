"""Figures for run traces: minimal hand-written SVG plus a CSV table per figure.

The tables hold exactly the plotted values, copied from the trace; they are
what the tests inspect.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from mhof.trace import Trace

PANEL_W, PANEL_H = 560, 180
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 28, 30
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def selected_epoch(trace: Trace) -> int:
    from mhof.schemes import select_model

    scheme = trace.meta.get("scheme", {}).get("scheme", "mhof")
    if scheme == "mhof":
        return select_model(trace)
    return trace.records[-1].k


class _Panel:
    def __init__(self, y0, title, xs, ys_list, log=False):
        self.y0 = y0
        self.title = title
        self.log = log
        self.xmin, self.xmax = float(min(xs)), float(max(xs))
        vals = np.concatenate([np.asarray(v, float) for v in ys_list])
        vals = vals[np.isfinite(vals)]
        if log:
            vals = np.log10(vals[vals > 0]) if np.any(vals > 0) else np.zeros(1)
        self.ymin = float(vals.min()) if vals.size else 0.0
        self.ymax = float(vals.max()) if vals.size else 1.0
        if self.ymax == self.ymin:
            self.ymin -= 0.5
            self.ymax += 0.5
        if self.xmax == self.xmin:
            self.xmax += 1.0

    def px(self, x):
        return MARGIN_L + (x - self.xmin) / (self.xmax - self.xmin) * (PANEL_W - MARGIN_L - MARGIN_R)

    def py(self, y):
        if self.log:
            y = math.log10(y) if y > 0 else self.ymin
        frac = (y - self.ymin) / (self.ymax - self.ymin)
        return self.y0 + MARGIN_T + (1.0 - frac) * (PANEL_H - MARGIN_T - MARGIN_B)

    def frame(self):
        x0, x1 = MARGIN_L, PANEL_W - MARGIN_R
        y0, y1 = self.y0 + MARGIN_T, self.y0 + PANEL_H - MARGIN_B
        lo = f"1e{self.ymin:.2g}" if self.log else f"{self.ymin:.4g}"
        hi = f"1e{self.ymax:.2g}" if self.log else f"{self.ymax:.4g}"
        return [
            f'<rect x="{x0}" y="{y0}" width="{x1 - x0}" height="{y1 - y0}" fill="none" stroke="#444"/>',
            _text(x0, self.y0 + 16, self.title, size=13),
            _text(x0 - 6, y1, lo, anchor="end"),
            _text(x0 - 6, y0 + 10, hi, anchor="end"),
            _text(x0, y1 + 16, f"{self.xmin:g}"),
            _text(x1, y1 + 16, f"{self.xmax:g}", anchor="end"),
        ]

    def polyline(self, xs, ys, color, dash=False):
        pts = " ".join(f"{self.px(x):.2f},{self.py(y):.2f}" for x, y in zip(xs, ys) if np.isfinite(y))
        extra = ' stroke-dasharray="5,3"' if dash else ""
        return f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.4"{extra}/>'


def _text(x, y, s, size=11, anchor="start"):
    return (f'<text x="{x}" y="{y}" font-size="{size}" font-family="sans-serif" '
            f'text-anchor="{anchor}">{escape(str(s))}</text>')


def _svg(width, height, body):
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">\n<rect width="100%" height="100%" fill="white"/>\n'
            + "\n".join(body) + "\n</svg>\n")


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def dynamics_table(trace: Trace):
    d = trace.d
    header = ["k"] + [f"R_{i}" for i in range(d)] + [f"b_{i}" for i in range(d)] \
        + [f"mu_{i}" for i in range(d)] + ["shrank"]
    rows = []
    for r in trace.records:
        b = [""] * d if r.b is None else [float(v) for v in r.b]
        rows.append([r.k] + [float(v) for v in r.reg] + b + [float(v) for v in r.mu] + [int(r.shrank)])
    return header, rows


def render_dynamics(trace: Trace, out_path) -> tuple[Path, Path]:
    """One panel per regularizer (value and setpoint over epochs) and a
    log-scale multiplier panel; shrink epochs are marked with ticks."""
    out_path = Path(out_path)
    d = trace.d
    ks = [r.k for r in trace.records]
    reg = trace.matrix("reg")
    mu = trace.matrix("mu")
    has_b = all(r.b is not None for r in trace.records)
    b = trace.matrix("b") if has_b else None
    shrinks = trace.shrink_epochs()
    body = []
    for i in range(d):
        series = [reg[:, i]] + ([b[:, i]] if has_b else [])
        panel = _Panel(i * PANEL_H, f"R_{i} (solid) and setpoint b_{i} (dashed)", ks, series)
        body += panel.frame()
        body.append(panel.polyline(ks, reg[:, i], COLORS[0]))
        if has_b:
            body.append(panel.polyline(ks, b[:, i], COLORS[1], dash=True))
        for k in shrinks:
            x = panel.px(k)
            ybot = panel.y0 + PANEL_H - MARGIN_B
            body.append(f'<line x1="{x:.2f}" y1="{ybot}" x2="{x:.2f}" y2="{ybot - 8}" stroke="{COLORS[1]}"/>')
    panel = _Panel(d * PANEL_H, "multipliers mu (log scale)", ks, [mu[:, i] for i in range(d)], log=True)
    body += panel.frame()
    for i in range(d):
        body.append(panel.polyline(ks, mu[:, i], COLORS[(i + 2) % len(COLORS)]))
    out_path.write_text(_svg(PANEL_W, (d + 1) * PANEL_H, body), encoding="utf-8")
    table = out_path.with_suffix(".csv")
    _write_csv(table, *dynamics_table(trace))
    return out_path, table


def phase_table(trace: Trace, reg_index: int, every: int = 1):
    d = trace.d
    if not 0 <= reg_index < d:
        raise IndexError(f"reg_index {reg_index} out of range for d={d}")
    if every < 1:
        raise ValueError("every must be >= 1")
    sel = selected_epoch(trace)
    rows = []
    for r in trace.records:
        if r.k % every and r.k != sel:
            continue
        role = "initial" if r.k == 0 else ("selected" if r.k == sel else "point")
        rows.append([r.k, float(r.reg[reg_index]), r.ell, role])
    return ["k", f"R_{reg_index}", "ell", "role"], rows


def _ramp(t):
    # blue -> yellow along epoch order
    r = int(30 + 220 * t)
    g = int(60 + 160 * t)
    b = int(200 - 170 * t)
    return f"#{r:02x}{g:02x}{b:02x}"


def render_phase_portrait(trace: Trace, reg_index: int, out_path, every: int = 1) -> tuple[Path, Path]:
    """Scatter of (R_reg_index, ell) in epoch order with a colour ramp; the
    initial point is enlarged and the selected model ringed."""
    out_path = Path(out_path)
    header, rows = phase_table(trace, reg_index, every)
    xs = [row[1] for row in rows]
    ys = [row[2] for row in rows]
    side = 480
    m = 60
    xmin, xmax = min(xs), max(xs)
    ymin, ymax = min(ys), max(ys)
    xmax = xmax if xmax > xmin else xmin + 1.0
    ymax = ymax if ymax > ymin else ymin + 1.0

    def px(x):
        return m + (x - xmin) / (xmax - xmin) * (side - 2 * m)

    def py(y):
        return side - m - (y - ymin) / (ymax - ymin) * (side - 2 * m)

    body = [
        f'<rect x="{m}" y="{m}" width="{side - 2 * m}" height="{side - 2 * m}" fill="none" stroke="#444"/>',
        _text(m, 24, f"phase portrait: ell vs R_{reg_index}", size=13),
        _text(side / 2, side - 16, f"R_{reg_index}", anchor="middle"),
        _text(18, side / 2, "ell"),
        _text(m, side - m + 16, f"{xmin:.4g}"),
        _text(side - m, side - m + 16, f"{xmax:.4g}", anchor="end"),
        _text(m - 6, side - m, f"{ymin:.4g}", anchor="end"),
        _text(m - 6, m + 10, f"{ymax:.4g}", anchor="end"),
    ]
    kmax = max(row[0] for row in rows) or 1
    for k, x, y, role in rows:
        r = 6 if role == "initial" else 2.5
        body.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="{r}" fill="{_ramp(k / kmax)}"/>')
        if role == "selected":
            body.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="8" fill="none" '
                        f'stroke="{COLORS[1]}" stroke-width="2"/>')
    out_path.write_text(_svg(side, side, body), encoding="utf-8")
    table = out_path.with_suffix(".csv")
    _write_csv(table, header, rows)
    return out_path, table
