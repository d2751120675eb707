"""Pattern detection on a synthetic two-year series.

We build a weekly series with a plateau, a slow climb, a sudden drop and
a level shift at each EPSS model release. Detection runs once over the raw
series and once per model era, so the release cliffs stop masquerading as
Jumps or Drops. An SVG chart of the series goes to the temp directory.

Run: python3 demos/03_patterns_and_eras.py
"""
from __future__ import annotations

import datetime as dt
import tempfile
from pathlib import Path

from pecwe.analytics import classify_range, era_boundaries
from pecwe.model import CweId, PecweSeries
from pecwe.patterns import detect_patterns, detect_patterns_by_era
from pecwe.report import svg_chart

start = dt.date(2021, 4, 14)
values = []
for week in range(152):
    day = start + dt.timedelta(weeks=week)
    if day < dt.date(2022, 2, 4):
        level = 0.30 + 0.02 * min(max(week - 20, 0), 8)  # plateau, then a gentle climb
    elif day < dt.date(2023, 3, 7):
        level = 0.70 - (0.30 if 80 <= week < 84 else 0.0)  # a short collapse inside v2
    else:
        level = 0.50
    values.append(round(level, 4))
series = PecweSeries(CweId(89), tuple((start + dt.timedelta(weeks=i), v) for i, v in enumerate(values)))

print(f"range class: {classify_range(series).value}")
print("\nraw series, ignoring eras:")
for seg in detect_patterns(series):
    print(f"  {seg.kind.value:9} {seg.start} .. {seg.end}  {seg.delta:+.2f}")

print("\nper era:")
per_era, boundaries = detect_patterns_by_era(series)
for era, segments in per_era:
    for seg in segments:
        print(f"  v{era.version} {seg.kind.value:9} {seg.start} .. {seg.end}  {seg.delta:+.2f}")
for mark in era_boundaries(series):
    print(f"  v{mark.from_version}->v{mark.to_version} at {mark.day}: {mark.delta:+.2f}")

points = [(d.toordinal(), v) for d, v in series.points]
markers = [(b.day.toordinal(), 0.5, f"v{b.to_version}") for b in boundaries]
chart = svg_chart("Synthetic weekly probability", points, markers=markers, x_label="date", y_label="probability",
                  x_tick_format=lambda x: dt.date.fromordinal(int(round(x))).isoformat())
out = Path(tempfile.gettempdir()) / "pecwe_patterns_demo.svg"
out.write_text(chart)
print(f"\nchart written to {out}")
