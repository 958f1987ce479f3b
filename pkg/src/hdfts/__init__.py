"""Two-fold factor model for high-dimensional functional time series.

Each of N cross-sections is a time series of curves. Curves are decomposed
as section-specific back loadings times common factor curves, and the common
curves in turn as shared front loadings times a small factor-matrix time
series, which is forecast with a VAR.
"""

__version__ = "0.1.0"

from .annuity import AnnuityQuote, MortalityTable, annuity_price, pricing_error_report, survival_probabilities
from .config import RunConfig, derive_rng, derive_seed
from .errors import HdftsError
from .evaluation import EvalReport, StudyConfig, expanding_window_eval, monte_carlo_study
from .forecasting import FittedModel, ForecastBundle, bootstrap_intervals, fit_and_forecast, fit_model
from .panel import FunctionalPanel, Grid, center_panel, load_panel_csv, log_transform, write_panel_csv
from .simulate import DgpConfig, simulate_dgp

__all__ = [
    "AnnuityQuote", "DgpConfig", "EvalReport", "FittedModel", "ForecastBundle",
    "FunctionalPanel", "Grid", "HdftsError", "MortalityTable", "RunConfig", "StudyConfig",
    "annuity_price", "bootstrap_intervals", "center_panel", "derive_rng", "derive_seed",
    "expanding_window_eval", "fit_and_forecast", "fit_model", "load_panel_csv",
    "log_transform", "monte_carlo_study", "pricing_error_report", "simulate_dgp",
    "survival_probabilities", "write_panel_csv",
]
