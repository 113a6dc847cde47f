"""Weighted least-squares fitting: engine, model curves, global fits."""

from .lm import (
    FitError,
    FitProblem,
    FitResult,
    LMConfig,
    NonPhysicalFitError,
    levenberg_marquardt,
)
from .mixture import fit_gaussian_mixture, gaussian_mixture
from .models import (
    antibunching,
    exponential_decay,
    fit_exponential_decay,
    fit_lorentzian,
    lorentzian,
)
from .ple import GlobalPleResult, fit_ple_global

__all__ = [
    "FitError",
    "FitProblem",
    "FitResult",
    "LMConfig",
    "NonPhysicalFitError",
    "levenberg_marquardt",
    "fit_gaussian_mixture",
    "gaussian_mixture",
    "antibunching",
    "exponential_decay",
    "fit_exponential_decay",
    "fit_lorentzian",
    "lorentzian",
    "GlobalPleResult",
    "fit_ple_global",
]
