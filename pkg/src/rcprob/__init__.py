"""Echo state networks with probabilistic readouts.

The reservoir is fixed and random; only the readout is trained, by one of
quantile regression, MC dropout, variational inference, HMC (optionally on
PCA-compressed states) or horseshoe variable selection.
"""

from .calibration import CalibrationMap, apply_recalibrator, fit_recalibrator, isotonic_fit
from .data import (
    NormStats,
    SeasonalSpec,
    SplitSpec,
    TimeSeries,
    load_csv,
    make_supervised,
    seasonal_difference,
    split,
    synth_seasonal,
)
from .experiment import ExperimentConfig, GridSpec, RunReport, compare_methods, grid_search, run_experiment
from .forecast import DEFAULT_LEVELS, EnsembleForecast, QuantileForecast
from .hmc import HmcConfig, run_chain
from .metrics import MetricsReport, calibration_curve, calibration_error, evaluate, extract_quantiles, mcrps
from .mlp import Mlp, MlpSpec, OptimizerConfig
from .reservoir import ReservoirConfig, init_reservoir, pca_fit

__all__ = [
    "CalibrationMap", "apply_recalibrator", "fit_recalibrator", "isotonic_fit",
    "NormStats", "SeasonalSpec", "SplitSpec", "TimeSeries", "load_csv", "make_supervised",
    "seasonal_difference", "split", "synth_seasonal",
    "ExperimentConfig", "GridSpec", "RunReport", "compare_methods", "grid_search", "run_experiment",
    "DEFAULT_LEVELS", "EnsembleForecast", "QuantileForecast",
    "HmcConfig", "run_chain",
    "MetricsReport", "calibration_curve", "calibration_error", "evaluate", "extract_quantiles", "mcrps",
    "Mlp", "MlpSpec", "OptimizerConfig",
    "ReservoirConfig", "init_reservoir", "pca_fit",
]
