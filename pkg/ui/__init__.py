from .charts import ChartSeries, render_line_chart

__all__ = ["ChartSeries", "render_line_chart"]
