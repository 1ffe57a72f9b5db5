"""SVG rendering of agent trajectories.

Element classes: ``trajectory`` (one polyline per agent), ``danger`` (wider
overlay where an agent was inside another's critical radius), ``start``
circles, ``end`` crosses and ``target`` diamonds.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional
from xml.etree import ElementTree as ET

import numpy as np

from .artifacts import TrajectoryFormatError, TrajectoryTable

SVG_NS = "http://www.w3.org/2000/svg"
COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
          "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")

SIZE = 600.0
MARGIN = 30.0
LINE_WIDTH = 1.5
DANGER_WIDTH = 5.0
MARK = 5.0


def _fmt(x: float) -> str:
    return f"{x:.3f}"


def _danger_runs(flags: np.ndarray) -> list[tuple[int, int]]:
    """Inclusive sample index ranges where ``flags`` is set."""
    runs = []
    start = None
    for s, f in enumerate(flags):
        if f and start is None:
            start = s
        elif not f and start is not None:
            runs.append((start, s))
            start = None
    if start is not None:
        runs.append((start, len(flags) - 1))
    return runs


def render_svg(table: TrajectoryTable, targets=None, mark_danger: bool = True) -> str:
    if table.positions.size == 0:
        raise TrajectoryFormatError("trajectory has no samples")
    pts = table.positions
    allpts = pts.reshape(-1, 2)
    tgt = None
    if targets is not None:
        tgt = np.asarray(targets, dtype=float).reshape(-1, 2)
        allpts = np.vstack([allpts, tgt])
    lo = allpts.min(axis=0)
    span = max(float(np.max(allpts.max(axis=0) - lo)), 1e-9)
    scale = (SIZE - 2 * MARGIN) / span

    def xy(p):
        return MARGIN + (p[0] - lo[0]) * scale, SIZE - MARGIN - (p[1] - lo[1]) * scale

    ET.register_namespace("", SVG_NS)
    root = ET.Element("svg", xmlns=SVG_NS, width=_fmt(SIZE), height=_fmt(SIZE),
                      viewBox=f"0 0 {_fmt(SIZE)} {_fmt(SIZE)}")
    ET.SubElement(root, "rect", width="100%", height="100%", fill="white")
    for i in range(table.n):
        color = COLORS[i % len(COLORS)]
        coords = [xy(p) for p in pts[:, i]]
        ET.SubElement(root, "polyline", {
            "class": "trajectory", "fill": "none", "stroke": color,
            "stroke-width": _fmt(LINE_WIDTH),
            "points": " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in coords),
        })
        if mark_danger:
            for a, b in _danger_runs(table.in_danger[:, i]):
                seg = coords[a:b + 1] if b > a else [coords[a], coords[a]]
                d = "M " + " L ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in seg)
                ET.SubElement(root, "path", {
                    "class": "danger", "fill": "none", "stroke": color,
                    "stroke-width": _fmt(DANGER_WIDTH), "stroke-linecap": "round", "d": d,
                })
        x0, y0 = coords[0]
        ET.SubElement(root, "circle", {"class": "start", "cx": _fmt(x0), "cy": _fmt(y0),
                                       "r": _fmt(MARK), "fill": "none", "stroke": color})
        x1, y1 = coords[-1]
        ET.SubElement(root, "path", {
            "class": "end", "stroke": color, "stroke-width": _fmt(LINE_WIDTH),
            "d": (f"M {_fmt(x1 - MARK)},{_fmt(y1 - MARK)} L {_fmt(x1 + MARK)},{_fmt(y1 + MARK)} "
                  f"M {_fmt(x1 - MARK)},{_fmt(y1 + MARK)} L {_fmt(x1 + MARK)},{_fmt(y1 - MARK)}"),
        })
    if tgt is not None:
        for i, p in enumerate(tgt):
            x, y = xy(p)
            corners = [(x, y - MARK), (x + MARK, y), (x, y + MARK), (x - MARK, y)]
            ET.SubElement(root, "polygon", {
                "class": "target", "fill": "none", "stroke": COLORS[i % len(COLORS)],
                "points": " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in corners),
            })
    return ET.tostring(root, encoding="unicode")


def plot_trajectory(table: TrajectoryTable, out: str | Path, targets=None,
                    mark_danger: bool = True) -> Path:
    """Render and write the SVG. Nothing is written if rendering fails."""
    text = render_svg(table, targets, mark_danger)
    out = Path(out)
    out.write_text(text, encoding="utf-8")
    return out


def targets_from_table(table: TrajectoryTable, displacements) -> np.ndarray:
    """Targets implied by the final references: mean of ``theta - d`` plus ``d``."""
    d = np.asarray(displacements, dtype=float)
    if d.shape != (table.n, 2):
        raise ValueError(f"expected {table.n} displacements, got shape {d.shape}")
    centroid = (table.references[-1] - d).mean(axis=0)
    return centroid + d
