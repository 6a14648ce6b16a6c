"""
Self-contained SVG charts of experiment aggregates: one mean line plus a
translucent SEM ribbon per estimator over a log-scaled sweep axis, and an
optional failure-proportion panel underneath.

Output is plain text built from fixed-precision numbers, so identical
aggregates give byte-identical files.
"""

import logging
import math
from html import escape
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from estimator.errors import InputFormatError

logger = logging.getLogger(__name__)

WIDTH = 640
PANEL_HEIGHT = 360
FAILURE_PANEL_HEIGHT = 160
MARGIN_LEFT = 80
MARGIN_RIGHT = 130
MARGIN_TOP = 40
MARGIN_BOTTOM = 50

COLORS = {"vmp": "#1f77b4", "rls": "#d62728", "ils": "#2ca02c"}
FALLBACK_COLORS = ["#9467bd", "#8c564b", "#e377c2", "#7f7f7f"]

METRICS = ("rms_simulation", "rms_prediction")
REQUIRED_COLUMNS = ("sweep_value", "estimator", "failure_proportion")

Point = Tuple[float, float]


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def _label(value: float) -> str:
    return f"{value:g}"


class SvgCanvas:
    """Accumulates SVG elements and renders the document."""

    def __init__(self, width: int, height: int):
        self.width = width
        self.height = height
        self.elements: List[str] = []

    def line(self, a: Point, b: Point, stroke: str = "#000000", width: float = 1.0, dash: Optional[str] = None):
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.elements.append(
            f'<line x1="{_fmt(a[0])}" y1="{_fmt(a[1])}" x2="{_fmt(b[0])}" y2="{_fmt(b[1])}" '
            f'stroke="{stroke}" stroke-width="{width}"{extra}/>'
        )

    def polyline(self, points: Sequence[Point], stroke: str, width: float = 2.0):
        coords = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in points)
        self.elements.append(f'<polyline points="{coords}" fill="none" stroke="{stroke}" stroke-width="{width}"/>')

    def polygon(self, points: Sequence[Point], fill: str, opacity: float = 0.2):
        coords = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in points)
        self.elements.append(f'<polygon points="{coords}" fill="{fill}" fill-opacity="{opacity}" stroke="none"/>')

    def circle(self, center: Point, radius: float, fill: str):
        self.elements.append(f'<circle cx="{_fmt(center[0])}" cy="{_fmt(center[1])}" r="{radius}" fill="{fill}"/>')

    def text(self, position: Point, content: str, anchor: str = "start", size: int = 12, rotate: bool = False):
        transform = f' transform="rotate(-90 {_fmt(position[0])} {_fmt(position[1])})"' if rotate else ""
        self.elements.append(
            f'<text x="{_fmt(position[0])}" y="{_fmt(position[1])}" font-family="sans-serif" '
            f'font-size="{size}" text-anchor="{anchor}"{transform}>{escape(content)}</text>'
        )

    def render(self) -> str:
        header = (
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">'
        )
        background = f'<rect x="0" y="0" width="{self.width}" height="{self.height}" fill="#ffffff"/>'
        return "\n".join([header, background, *self.elements, "</svg>"]) + "\n"


class Axis:
    """Maps data values onto a pixel interval, optionally in log10."""

    def __init__(self, low: float, high: float, pixel_low: float, pixel_high: float, log: bool):
        self.log = log
        low, high = (math.log10(low), math.log10(high)) if log else (low, high)
        if high <= low:
            pad = 0.5 if log else max(abs(low) * 0.1, 0.5)
            low, high = low - pad, high + pad
        self.low, self.high = low, high
        self.pixel_low, self.pixel_high = pixel_low, pixel_high

    def __call__(self, value: float) -> float:
        v = math.log10(value) if self.log else value
        fraction = (v - self.low) / (self.high - self.low)
        return self.pixel_low + fraction * (self.pixel_high - self.pixel_low)

    def ticks(self) -> List[float]:
        if self.log:
            return [10.0 ** e for e in range(math.ceil(self.low), math.floor(self.high) + 1)]
        return [float(v) for v in np.linspace(self.low, self.high, 5)]


def _color(estimator: str, index: int) -> str:
    return COLORS.get(estimator, FALLBACK_COLORS[index % len(FALLBACK_COLORS)])


def _check_columns(frame: pd.DataFrame, metric: str) -> None:
    if metric not in METRICS:
        raise InputFormatError(f"Unknown metric {metric!r}; choose from {METRICS}")
    required = [*REQUIRED_COLUMNS, f"mean_{metric}", f"sem_{metric}"]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise InputFormatError(f"Aggregates table is missing columns {missing}")


def _series(frame: pd.DataFrame) -> Dict[str, pd.DataFrame]:
    """Per-estimator rows sorted by sweep value, estimators in first-seen order."""
    return {
        name: frame[frame["estimator"] == name].sort_values("sweep_value", kind="mergesort")
        for name in dict.fromkeys(frame["estimator"])
    }


def plot_sweep(
    frame: pd.DataFrame,
    metric: str = "rms_simulation",
    failures: bool = False,
    x_label: str = "sweep value",
    y_label: Optional[str] = None,
    title: Optional[str] = None,
    log_y: bool = True,
) -> str:
    """
    Render an aggregates table as SVG text.

    Args:
        frame: Aggregates with sweep_value, estimator, mean_<metric>,
            sem_<metric> and failure_proportion columns
        metric: Which RMS metric to draw
        failures: Add the failure-proportion panel
        x_label: Sweep axis label
        y_label: Metric axis label, defaults to the metric name
        title: Optional chart title
        log_y: Log-scale the metric axis when every plotted value is positive

    Returns:
        The SVG document
    """
    _check_columns(frame, metric)
    mean_col, sem_col = f"mean_{metric}", f"sem_{metric}"

    height = PANEL_HEIGHT + (FAILURE_PANEL_HEIGHT if failures else 0)
    canvas = SvgCanvas(WIDTH, height)
    left, right = MARGIN_LEFT, WIDTH - MARGIN_RIGHT
    top, bottom = MARGIN_TOP, PANEL_HEIGHT - MARGIN_BOTTOM

    plotted = frame.dropna(subset=[mean_col])
    sweep = frame["sweep_value"].astype(float)
    sweep = sweep[sweep > 0]
    x_axis = Axis(
        float(sweep.min()) if len(sweep) else 1.0,
        float(sweep.max()) if len(sweep) else 10.0,
        left, right, log=True,
    )

    means = plotted[mean_col].astype(float).to_numpy()
    sems = plotted[sem_col].fillna(0.0).astype(float).to_numpy()
    upper = means + sems
    lower = means - sems
    use_log_y = log_y and len(means) > 0 and bool(np.all(means > 0))
    if use_log_y:
        positive_lower = np.where(lower > 0, lower, means)
        y_axis = Axis(float(positive_lower.min()), float(upper.max()), bottom, top, log=True)
    elif len(means):
        y_axis = Axis(float(lower.min()), float(upper.max()), bottom, top, log=False)
    else:
        y_axis = Axis(0.0, 1.0, bottom, top, log=False)

    # axes
    canvas.line((left, bottom), (right, bottom))
    canvas.line((left, bottom), (left, top))
    for tick in sorted(set(float(v) for v in sweep)):
        x = x_axis(tick)
        canvas.line((x, bottom), (x, bottom + 5))
        canvas.text((x, bottom + 18), _label(tick), anchor="middle", size=10)
    for tick in y_axis.ticks():
        y = y_axis(tick)
        canvas.line((left - 5, y), (left, y))
        canvas.line((left, y), (right, y), stroke="#dddddd", width=0.5)
        canvas.text((left - 8, y + 4), _label(tick), anchor="end", size=10)
    canvas.text(((left + right) / 2, bottom + 38), x_label, anchor="middle")
    canvas.text((18, (top + bottom) / 2), y_label or metric, anchor="middle", rotate=True)
    if title:
        canvas.text(((left + right) / 2, 22), title, anchor="middle", size=14)

    series = _series(frame)
    for index, (name, rows) in enumerate(series.items()):
        color = _color(name, index)
        rows = rows[(rows["sweep_value"] > 0) & rows[mean_col].notna()]
        xs = [x_axis(float(v)) for v in rows["sweep_value"]]
        mean = rows[mean_col].astype(float).to_numpy()
        sem = rows[sem_col].fillna(0.0).astype(float).to_numpy()
        if len(xs) == 0:
            continue

        high = mean + sem
        low = mean - sem
        if use_log_y:
            low = np.where(low > 0, low, mean)
        upper_edge = [(x, y_axis(v)) for x, v in zip(xs, high)]
        lower_edge = [(x, y_axis(v)) for x, v in zip(xs, low)]
        canvas.polygon(upper_edge + lower_edge[::-1], color)

        line = [(x, y_axis(v)) for x, v in zip(xs, mean)]
        canvas.polyline(line, color)
        for point in line:
            canvas.circle(point, 2.5, color)

    # legend
    for index, name in enumerate(series):
        y = top + 10 + 18 * index
        color = _color(name, index)
        canvas.line((right + 15, y), (right + 40, y), stroke=color, width=2.0)
        canvas.text((right + 46, y + 4), name.upper())

    if failures:
        _failure_panel(canvas, series, x_axis, sorted(set(float(v) for v in sweep)))

    return canvas.render()


def _failure_panel(canvas: SvgCanvas, series: Dict[str, pd.DataFrame], x_axis: Axis, ticks: List[float]) -> None:
    left, right = MARGIN_LEFT, WIDTH - MARGIN_RIGHT
    top = PANEL_HEIGHT + 10
    bottom = PANEL_HEIGHT + FAILURE_PANEL_HEIGHT - MARGIN_BOTTOM + 10
    y_axis = Axis(0.0, 1.0, bottom, top, log=False)

    canvas.line((left, bottom), (right, bottom))
    canvas.line((left, bottom), (left, top))
    for tick in (0.0, 0.5, 1.0):
        y = y_axis(tick)
        canvas.line((left - 5, y), (left, y))
        canvas.text((left - 8, y + 4), _label(tick), anchor="end", size=10)
    for tick in ticks:
        x = x_axis(tick)
        canvas.line((x, bottom), (x, bottom + 5))
        canvas.text((x, bottom + 18), _label(tick), anchor="middle", size=10)
    canvas.text((18, (top + bottom) / 2), "failures", anchor="middle", rotate=True)

    for index, (name, rows) in enumerate(series.items()):
        rows = rows[rows["sweep_value"] > 0]
        points = [(x_axis(float(v)), y_axis(float(p))) for v, p in zip(rows["sweep_value"], rows["failure_proportion"])]
        if points:
            canvas.polyline(points, _color(name, index), width=1.5)


def write_sweep_svg(
    frame: pd.DataFrame,
    path: Union[str, Path],
    metric: str = "rms_simulation",
    failures: bool = False,
    **kwargs,
) -> None:
    svg = plot_sweep(frame, metric=metric, failures=failures, **kwargs)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(svg)
    logger.info(f"Wrote {metric} chart to {path}")
