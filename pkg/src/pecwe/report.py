"""Rendering of report tables as CSV, JSON and minimal SVG charts.

CSV cells carry probabilities rounded for display; JSON keeps full
precision. All output is byte-deterministic for identical input.
"""

from __future__ import annotations

import csv
import datetime as _dt
import io
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Sequence
from xml.sax.saxutils import escape

from .analytics import RoundingPolicy


@dataclass
class Table:
    """Columns, rows and optional trailing summary tables.

    ``real_columns`` names the columns formatted with the rounding policy in
    CSV output.
    """

    columns: Sequence[str]
    rows: list
    real_columns: frozenset = frozenset()
    footers: list = field(default_factory=list)  # (name, Table) pairs


def _cell(value: Any, policy: RoundingPolicy, real: bool) -> str:
    if value is None:
        return ""
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, bool):
        return "1" if value else "0"
    if real and isinstance(value, float):
        return policy.format(value)
    if isinstance(value, (_dt.date, int, str)):
        return str(value)
    return str(value)


def render_csv(table: Table, policy: RoundingPolicy) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")

    def emit(t: Table):
        writer.writerow(t.columns)
        for row in t.rows:
            writer.writerow([_cell(row.get(c), policy, c in t.real_columns) for c in t.columns])

    emit(table)
    for _, footer in table.footers:
        buf.write("\n")
        emit(footer)
    return buf.getvalue()


def _jsonable(value):
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (_dt.date,)):
        return value.isoformat()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def render_json(table: Table, meta: dict) -> str:
    doc = {"meta": meta, "rows": [{c: _jsonable(r.get(c)) for c in table.columns} for r in table.rows]}
    for name, footer in table.footers:
        doc[name] = [{c: _jsonable(r.get(c)) for c in footer.columns} for r in footer.rows]
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


# ---------------------------------------------------------------------- SVG

WIDTH, HEIGHT = 720, 420
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 60, 20, 40, 50


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _ticks(lo: float, hi: float, count: int = 5) -> list:
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * i / (count - 1) for i in range(count)]


def svg_chart(title: str, points: Sequence[tuple], *, x_label: str = "", y_label: str = "",
              mode: str = "line", markers: Sequence[tuple] = (),
              x_tick_format=None, y_range: tuple = (0.0, 1.0)) -> str:
    """Draw a line or scatter chart of ``(x, y)`` numeric points.

    ``markers`` are ``(x, y, label)`` triples drawn as filled black dots.
    """
    plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
    xs = [p[0] for p in points] + [m[0] for m in markers]
    x_lo, x_hi = (min(xs), max(xs)) if xs else (0.0, 1.0)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    y_lo, y_hi = y_range

    def sx(x):
        return MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y):
        return MARGIN_TOP + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h

    fmt_x = x_tick_format or (lambda v: f"{v:g}")
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{MARGIN_LEFT}" y1="{MARGIN_TOP + plot_h}" x2="{MARGIN_LEFT + plot_w}" '
        f'y2="{MARGIN_TOP + plot_h}" stroke="black"/>',
        f'<line x1="{MARGIN_LEFT}" y1="{MARGIN_TOP}" x2="{MARGIN_LEFT}" '
        f'y2="{MARGIN_TOP + plot_h}" stroke="black"/>',
    ]
    for y in _ticks(y_lo, y_hi):
        out.append(f'<text x="{MARGIN_LEFT - 6}" y="{_fmt(sy(y) + 4)}" text-anchor="end">{y:.2f}</text>')
    for x in _ticks(x_lo, x_hi):
        out.append(f'<text x="{_fmt(sx(x))}" y="{MARGIN_TOP + plot_h + 16}" '
                   f'text-anchor="middle">{escape(fmt_x(x))}</text>')
    if x_label:
        out.append(f'<text x="{MARGIN_LEFT + plot_w / 2:.1f}" y="{HEIGHT - 10}" '
                   f'text-anchor="middle">{escape(x_label)}</text>')
    if y_label:
        out.append(f'<text x="14" y="{MARGIN_TOP + plot_h / 2:.1f}" text-anchor="middle" '
                   f'transform="rotate(-90 14 {MARGIN_TOP + plot_h / 2:.1f})">{escape(y_label)}</text>')
    if mode == "line" and points:
        coords = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in points)
        out.append(f'<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{coords}"/>')
    else:
        for x, y in points:
            out.append(f'<circle cx="{_fmt(sx(x))}" cy="{_fmt(sy(y))}" r="2" fill="steelblue"/>')
    for x, y, label in markers:
        out.append(f'<circle cx="{_fmt(sx(x))}" cy="{_fmt(sy(y))}" r="4" fill="black">'
                   f'<title>{escape(label)}</title></circle>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
