"""
EvoSeed – Charts
Trial-series line charts (influence, regret, relative error) rendered
off-screen to SVG with QtCharts.
"""

import logging
import os
from pathlib import Path
from typing import Mapping, Sequence

logger = logging.getLogger(__name__)

CHART_COLORS = {
    "EIM": "#4cc9f0",
    "IMM": "#a78bfa",
    "HD": "#ef4444",
    "Earliest": "#fbbf24",
    "rel_error": "#10b981",
}

SERIES_COLORS = [
    "#4cc9f0", "#f72585", "#7209b7", "#3a0ca3", "#4361ee",
    "#06d6a0", "#ffd166", "#ef476f", "#118ab2", "#e76f51",
]

CHART_SIZE = (900, 540)


def _application():
    """The running QApplication, or a new off-screen one."""
    os.environ.setdefault("QT_QPA_PLATFORM", "offscreen")
    from PySide6.QtWidgets import QApplication

    return QApplication.instance() or QApplication([])


def _style_chart(chart):
    """Apply consistent dark styling to a chart."""
    from PySide6.QtCore import Qt
    from PySide6.QtGui import QColor, QFont

    chart.setBackgroundBrush(QColor("#16213e"))
    chart.setTitleBrush(QColor("#ccd6f6"))
    title_font = QFont()
    title_font.setPointSize(13)
    title_font.setBold(True)
    chart.setTitleFont(title_font)
    chart.legend().setLabelColor(QColor("#8892b0"))
    chart.legend().setAlignment(Qt.AlignmentFlag.AlignBottom)


def _style_axis(axis, color="#8892b0"):
    from PySide6.QtGui import QColor, QFont

    axis.setLabelsColor(QColor(color))
    axis.setGridLineColor(QColor("#233554"))
    axis.setLinePenColor(QColor("#0f3460"))
    label_font = QFont()
    label_font.setPointSize(9)
    axis.setLabelsFont(label_font)


def render_line_chart(
    series: Mapping[str, Sequence[float]],
    title: str,
    path: Path,
    y_format: str = "%.1f",
    trials: Sequence[int] = (),
) -> Path:
    """
    One line per named series over the trial axis, written as SVG.
    Series may be shorter than the axis; missing values are left out.
    """
    _application()
    from PySide6.QtCharts import QChart, QLineSeries, QValueAxis
    from PySide6.QtCore import QRectF, QSize, Qt
    from PySide6.QtGui import QColor, QPainter
    from PySide6.QtSvg import QSvgGenerator
    from PySide6.QtWidgets import QGraphicsScene

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    width, height = CHART_SIZE

    chart = QChart()
    _style_chart(chart)
    chart.setTitle(title)

    lo, hi, longest = 0.0, 0.0, 0
    for i, (name, values) in enumerate(series.items()):
        xs = list(trials) or list(range(1, len(values) + 1))
        line = QLineSeries()
        line.setName(name)
        line.setColor(QColor(CHART_COLORS.get(name, SERIES_COLORS[i % len(SERIES_COLORS)])))
        pen = line.pen()
        pen.setWidth(3)
        line.setPen(pen)
        for x, y in zip(xs, values):
            if y is None:
                continue
            line.append(float(x), float(y))
            lo, hi = min(lo, float(y)), max(hi, float(y))
        longest = max(longest, len(xs))
        chart.addSeries(line)

    axis_x = QValueAxis()
    axis_x.setRange(1, max(longest, 2))
    axis_x.setLabelFormat("%d")
    axis_x.setTitleText("Trial")
    _style_axis(axis_x)
    chart.addAxis(axis_x, Qt.AlignmentFlag.AlignBottom)

    margin = max(abs(hi), abs(lo)) * 0.15 or 1.0
    axis_y = QValueAxis()
    axis_y.setRange(lo - margin if lo < 0 else 0, hi + margin)
    axis_y.setLabelFormat(y_format)
    _style_axis(axis_y)
    chart.addAxis(axis_y, Qt.AlignmentFlag.AlignLeft)
    for line in chart.series():
        line.attachAxis(axis_x)
        line.attachAxis(axis_y)

    scene = QGraphicsScene()
    scene.addItem(chart)
    chart.resize(width, height)

    generator = QSvgGenerator()
    generator.setFileName(str(path))
    generator.setSize(QSize(width, height))
    generator.setViewBox(QRectF(0, 0, width, height))
    generator.setTitle(title)
    painter = QPainter(generator)
    painter.setRenderHint(QPainter.RenderHint.Antialiasing)
    scene.render(painter, QRectF(0, 0, width, height), QRectF(0, 0, width, height))
    painter.end()
    logger.debug("chart %r written to %s", title, path)
    return path
