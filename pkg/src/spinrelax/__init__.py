"""Spin-relaxation analysis for optically addressed spin defects.

Rate-equation simulation of pump-probe PLE experiments, single-photon
detector dead time, T1 and temperature-model fitting, and exact selection
rules for the C3v double group.
"""

from .deadtime import DetectorSpec, measured_rate, monte_carlo_counts, steady_state_rate, t1_bias
from .errors import SpinRelaxError
from .experiment import ExperimentConfig, NoiseSpec, reference_config
from .pipeline import __version__, run_t1_pipeline, synthesize
from .ratemodel import DriveSchedule, FieldConfig, Populations, RateParams, evolve, steady_state
from .t1fit import PulsePairRecord, fit_multi_exponential, fit_t1, fit_t1_corrected
from .tempfit import RelaxationPoint, TempModelParams, fit_power_law, fit_temp_model
from .traces import TimeTrace

__all__ = [
    "DetectorSpec",
    "DriveSchedule",
    "ExperimentConfig",
    "FieldConfig",
    "NoiseSpec",
    "Populations",
    "PulsePairRecord",
    "RateParams",
    "RelaxationPoint",
    "SpinRelaxError",
    "TempModelParams",
    "TimeTrace",
    "__version__",
    "evolve",
    "fit_multi_exponential",
    "fit_power_law",
    "fit_t1",
    "fit_t1_corrected",
    "fit_temp_model",
    "measured_rate",
    "monte_carlo_counts",
    "reference_config",
    "run_t1_pipeline",
    "steady_state",
    "steady_state_rate",
    "synthesize",
    "t1_bias",
]
