"""Charts for the mobility-market simulator's CSV outputs."""

from .core import (COMPARISON_METRICS, PlotSpec, SchemaError, comparison_data,
                   convergence_series, moving_average, plot_comparison,
                   plot_convergence, read_csv)

__all__ = ["COMPARISON_METRICS", "PlotSpec", "SchemaError", "comparison_data",
           "convergence_series", "moving_average", "plot_comparison",
           "plot_convergence", "read_csv"]
