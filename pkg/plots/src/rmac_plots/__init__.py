"""Figure rendering for counterfactual-bounds experiment outputs."""

from .figures import PlotJob, PlotResult, plot_bounds, plot_strategies, plot_sweep, plot_types, render

__all__ = ["PlotJob", "PlotResult", "plot_bounds", "plot_types",
           "plot_strategies", "plot_sweep", "render"]
