"""Reverse cross-fitting double machine learning for time series."""

from .data import Role, TimeSeriesDataset, TransformSpec, load_csv, transform_and_lag, write_csv
from .dgp import GarchSpec, PlrSpec, SvarSpec, simulate_plr, simulate_svar, true_irf_svar, true_theta_svar
from .estimator import EstimateReport, LpReport, NuisanceSettings, estimate, estimate_lp
from .folds import Scheme, make_plan, nlo_plan, partition, rcf_plan, sample_usage
from .learners import PenaltySpec, fit_elastic_net, fit_path
from .tuning import Criterion, TuningGrid

__version__ = "0.1.0"

__all__ = [
    "Criterion", "EstimateReport", "GarchSpec", "LpReport", "NuisanceSettings", "PenaltySpec", "PlrSpec",
    "Role", "Scheme", "SvarSpec", "TimeSeriesDataset", "TransformSpec", "TuningGrid", "estimate",
    "estimate_lp", "fit_elastic_net", "fit_path", "load_csv", "make_plan", "nlo_plan", "partition",
    "rcf_plan", "sample_usage", "simulate_plr", "simulate_svar", "transform_and_lag", "true_irf_svar",
    "true_theta_svar", "write_csv",
]
