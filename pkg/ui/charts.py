from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PySide6.QtCharts import QChart, QLineSeries, QLogValueAxis, QValueAxis
from PySide6.QtCore import QMargins, QRectF, QSize, Qt
from PySide6.QtGui import QColor, QPainter, QPen
from PySide6.QtSvg import QSvgGenerator
from PySide6.QtWidgets import QGraphicsScene

from ui.styles import (
    AXIS_LABEL_COLOR,
    AXIS_LINE_COLOR,
    GRID_COLOR,
    LEGEND_LABEL_COLOR,
    MINOR_GRID_COLOR,
    PAGE_BG,
    PLOT_BG,
    REFERENCE_COLOR,
    ensure_application,
    series_color,
)

logger = logging.getLogger(__name__)

CHART_SIZE = QSize(960, 600)
MAX_POINTS = 2_000


@dataclass(slots=True)
class ChartSeries:
    label: str
    x: np.ndarray
    y: np.ndarray


def _thin(x: np.ndarray, y: np.ndarray, log_x: bool) -> tuple[np.ndarray, np.ndarray]:
    finite = np.isfinite(x) & np.isfinite(y)
    if log_x:
        finite &= x > 0
    x, y = x[finite], y[finite]
    if x.size <= MAX_POINTS:
        return x, y
    if log_x:
        picks = np.unique(np.geomspace(1, x.size, MAX_POINTS).astype(int) - 1)
    else:
        picks = np.unique(np.linspace(0, x.size - 1, MAX_POINTS).astype(int))
    return x[picks], y[picks]


def _style_line_series(series: QLineSeries, color: QColor, width: int, dashed: bool = False) -> None:
    pen = QPen(color)
    pen.setWidth(width)
    pen.setCapStyle(Qt.RoundCap)
    pen.setJoinStyle(Qt.RoundJoin)
    if dashed:
        pen.setStyle(Qt.DashLine)
    series.setPen(pen)


def _style_axis(axis) -> None:
    axis.setLabelsColor(AXIS_LABEL_COLOR)
    axis.setGridLineColor(GRID_COLOR)
    axis.setLinePenColor(AXIS_LINE_COLOR)
    axis.setTitleBrush(AXIS_LABEL_COLOR)
    if isinstance(axis, (QValueAxis, QLogValueAxis)):
        axis.setMinorGridLineVisible(True)
        axis.setMinorGridLineColor(MINOR_GRID_COLOR)


def _base_chart(title: str) -> QChart:
    chart = QChart()
    chart.setTheme(QChart.ChartThemeDark)
    chart.setTitle(title)
    chart.setTitleBrush(LEGEND_LABEL_COLOR)
    chart.setAnimationOptions(QChart.NoAnimation)
    chart.setBackgroundBrush(PAGE_BG)
    chart.setMargins(QMargins(6, 6, 6, 6))
    chart.setPlotAreaBackgroundVisible(True)
    chart.setPlotAreaBackgroundBrush(PLOT_BG)
    chart.setPlotAreaBackgroundPen(QColor(0, 0, 0, 0))
    chart.legend().setVisible(True)
    chart.legend().setAlignment(Qt.AlignTop)
    chart.legend().setLabelColor(LEGEND_LABEL_COLOR)
    chart.legend().setBackgroundVisible(False)
    return chart


def render_line_chart(
    path: str | Path,
    title: str,
    series: Sequence[ChartSeries],
    x_label: str,
    y_label: str,
    log_x: bool = True,
    reference_level: float | None = None,
) -> Path:
    """Write an SVG line chart (log-scaled x axis by default)."""
    ensure_application()
    target = Path(path)
    if target.suffix.lower() != ".svg":
        target = target.with_suffix(".svg")
    target.parent.mkdir(parents=True, exist_ok=True)

    chart = _base_chart(title)
    axis_x = QLogValueAxis() if log_x else QValueAxis()
    if log_x:
        axis_x.setBase(10.0)
        axis_x.setLabelFormat("%g")
    axis_x.setTitleText(x_label)
    axis_y = QValueAxis()
    axis_y.setTitleText(y_label)
    _style_axis(axis_x)
    _style_axis(axis_y)
    chart.addAxis(axis_x, Qt.AlignBottom)
    chart.addAxis(axis_y, Qt.AlignLeft)

    x_low, x_high, y_low, y_high = math.inf, -math.inf, math.inf, -math.inf
    for index, entry in enumerate(series):
        x, y = _thin(np.asarray(entry.x, dtype=float), np.asarray(entry.y, dtype=float), log_x)
        if x.size == 0:
            logger.info("series %s has no plottable points", entry.label)
            continue
        line = QLineSeries()
        line.setName(entry.label)
        _style_line_series(line, series_color(index), width=2)
        for x_value, y_value in zip(x, y):
            line.append(float(x_value), float(y_value))
        chart.addSeries(line)
        line.attachAxis(axis_x)
        line.attachAxis(axis_y)
        x_low, x_high = min(x_low, float(x.min())), max(x_high, float(x.max()))
        y_low, y_high = min(y_low, float(y.min())), max(y_high, float(y.max()))

    if math.isinf(x_low):
        x_low, x_high, y_low, y_high = 1.0, 10.0, 0.0, 1.0
    if reference_level is not None:
        reference = QLineSeries()
        reference.setName(f"level {reference_level:g}")
        _style_line_series(reference, REFERENCE_COLOR, width=1, dashed=True)
        reference.append(x_low, reference_level)
        reference.append(x_high, reference_level)
        chart.addSeries(reference)
        reference.attachAxis(axis_x)
        reference.attachAxis(axis_y)
        y_low, y_high = min(y_low, reference_level), max(y_high, reference_level)

    if x_high <= x_low:
        x_high = x_low * 10.0 if log_x else x_low + 1.0
    if y_high <= y_low:
        y_high = y_low + 1.0
    axis_x.setRange(x_low, x_high)
    axis_y.setRange(y_low, y_high)
    axis_y.applyNiceNumbers()

    scene = QGraphicsScene()
    scene.addItem(chart)
    chart.resize(CHART_SIZE.width(), CHART_SIZE.height())

    generator = QSvgGenerator()
    generator.setFileName(str(target))
    generator.setSize(CHART_SIZE)
    generator.setViewBox(QRectF(0, 0, CHART_SIZE.width(), CHART_SIZE.height()))
    generator.setTitle(title)
    painter = QPainter(generator)
    painter.setRenderHint(QPainter.Antialiasing)
    scene.render(painter, QRectF(0, 0, CHART_SIZE.width(), CHART_SIZE.height()), chart.boundingRect())
    painter.end()
    logger.info("wrote chart %s", target)
    return target
