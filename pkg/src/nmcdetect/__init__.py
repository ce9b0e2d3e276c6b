"""Adaptive subspace detection in nonzero-mean Gaussian clutter.

Modules
-------
model         scenario type, clutter covariance and scenario metrics
stats         sufficient statistics shared by the detectors
detectors     test statistics (proposed, equivalent and conventional forms)
perf          analytic PD/PFA and threshold inversion
montecarlo    seeded simulation engine and sweeps
scenario_gen  synthesis of A, p0 and mu at target metrics
pipeline      measured-data preprocessing and the Hotelling mean test
cli           command-line entry point
"""

__version__ = "0.1.0"

from .errors import (ConsistencyError, DataFormatError, DegenerateDataError, GenerationError,
                     NmcError, NumericError, ParameterDomainError)
from .model import Scenario, ScenarioMetrics, build_toeplitz_covariance
from .stats import SufficientStats, compute_sufficient_stats
from .detectors import DetectorKind
from .perf import PerformanceModel, QuadratureConfig, threshold_from_pfa

__all__ = [
    "ConsistencyError", "DataFormatError", "DegenerateDataError", "GenerationError", "NmcError",
    "NumericError", "ParameterDomainError", "Scenario", "ScenarioMetrics",
    "build_toeplitz_covariance", "SufficientStats", "compute_sufficient_stats", "DetectorKind",
    "PerformanceModel", "QuadratureConfig", "threshold_from_pfa", "__version__",
]
