"""Probabilistic sub-seasonal reservoir inflow forecasting and decision-value toolkit."""

__version__ = "0.1.0"

from .data import CANONICAL_HORIZONS, EnsemblePrecipForecast, HorizonSpec
from .emos import EmosFeatures, EmosModel, compute_features, fit_emos, predict_distribution
from .errors import InflowcastError, InputError, NumericalError
from .series import DailySeries, InflowSeries
from .verification import classify_skill, fair_crps, fcrpss
from .zaga import ZagaDistribution

__all__ = [
    "CANONICAL_HORIZONS",
    "DailySeries",
    "EmosFeatures",
    "EmosModel",
    "EnsemblePrecipForecast",
    "HorizonSpec",
    "InflowSeries",
    "InflowcastError",
    "InputError",
    "NumericalError",
    "ZagaDistribution",
    "classify_skill",
    "compute_features",
    "fair_crps",
    "fcrpss",
    "fit_emos",
    "predict_distribution",
    "__version__",
]
