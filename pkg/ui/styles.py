from __future__ import annotations

import os

from PySide6.QtGui import QColor
from PySide6.QtWidgets import QApplication

SERIES_COLORS = ("#60a5fa", "#34d399", "#fb7185", "#22d3ee", "#fbbf24", "#a78bfa")
REFERENCE_COLOR = QColor("#fb7185")
AXIS_LABEL_COLOR = QColor("#d1d5db")
GRID_COLOR = QColor("#334155")
MINOR_GRID_COLOR = QColor("#243041")
AXIS_LINE_COLOR = QColor("#64748b")
LEGEND_LABEL_COLOR = QColor("#e5e7eb")
PLOT_BG = QColor("#0b1220")
PAGE_BG = QColor("#070d18")


def series_color(index: int) -> QColor:
    return QColor(SERIES_COLORS[index % len(SERIES_COLORS)])


def ensure_application() -> QApplication:
    """Charts render without a display; the offscreen platform is used unless one is configured."""
    os.environ.setdefault("QT_QPA_PLATFORM", "offscreen")
    app = QApplication.instance()
    if app is None:
        app = QApplication([])
    return app
