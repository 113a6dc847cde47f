"""Closed-form model curves and single-curve fit helpers."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .lm import FitError, FitProblem, FitResult, LMConfig, NonPhysicalFitError, levenberg_marquardt


def lorentzian(x: np.ndarray, center: float, fwhm: float, amplitude: float, offset: float) -> np.ndarray:
    """offset + amplitude * fwhm^2 / (4 (x - center)^2 + fwhm^2).

    amplitude is the peak height above offset.
    """
    x = np.asarray(x, dtype=float)
    return offset + amplitude * fwhm**2 / (4.0 * (x - center) ** 2 + fwhm**2)


def exponential_decay(t: np.ndarray, floor: float, amplitude: float, tau: float) -> np.ndarray:
    """floor + amplitude * exp(-t / tau)."""
    t = np.asarray(t, dtype=float)
    return floor + amplitude * np.exp(-t / tau)


def antibunching(t: np.ndarray, contrast: float, t1: float) -> np.ndarray:
    """Normalised two-level correlation 1 - contrast * exp(-|t| / t1)."""
    t = np.asarray(t, dtype=float)
    return 1.0 - contrast * np.exp(-np.abs(t) / t1)


def _weights_from_errors(errors, shape) -> Optional[np.ndarray]:
    if errors is None:
        return None
    errors = np.asarray(errors, dtype=float)
    if errors.shape != shape:
        raise FitError("errors must match the data shape")
    if not np.all(np.isfinite(errors)) or np.any(errors <= 0):
        raise FitError("errors must be finite and positive")
    return 1.0 / errors**2


def fit_lorentzian(
    x: np.ndarray,
    y: np.ndarray,
    errors=None,
    config: Optional[LMConfig] = None,
) -> FitResult:
    """Fit a single Lorentzian peak; params are [center, fwhm, amplitude, offset]."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or x.size < 5:
        raise FitError("need at least 5 samples for a Lorentzian fit")
    if y.shape != x.shape:
        raise FitError("x and y must have the same shape")

    offset0 = float(np.median(y))
    i_max = int(np.argmax(y))
    center0 = float(x[i_max])
    height0 = max(float(y[i_max]) - offset0, np.finfo(float).eps)
    # width guess from the half-maximum crossing extent around the peak
    above = y - offset0 > height0 / 2
    if np.any(above):
        idx = np.flatnonzero(above)
        fwhm0 = max(float(x[idx[-1]] - x[idx[0]]), float(np.min(np.diff(x))))
    else:
        fwhm0 = float(x[-1] - x[0]) / 5

    span = float(x[-1] - x[0])
    problem = FitProblem(
        model=lambda p: lorentzian(x, *p),
        data=y,
        initial=np.array([center0, fwhm0, height0, offset0]),
        weights=_weights_from_errors(errors, y.shape),
        bounds=(
            np.array([x[0] - span, np.min(np.diff(x)) / 10, 0.0, 0.0]),
            np.array([x[-1] + span, 10 * span, np.inf, np.inf]),
        ),
    )
    result = levenberg_marquardt(problem, config)
    result.param_names = ["center", "fwhm", "amplitude", "offset"]
    return result


def fit_exponential_decay(
    times: np.ndarray,
    values: np.ndarray,
    errors=None,
    *,
    variant: str = "decay",
    config: Optional[LMConfig] = None,
) -> FitResult:
    """Fit an exponential relaxation curve.

    variant "decay" fits floor + A exp(-t/tau) with params [floor, A, tau];
    variant "antibunching" fits 1 - A exp(-|t|/t1) with params [A, t1].
    Raises NonPhysicalFitError when the fitted time constant is not
    positive.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.ndim != 1 or times.size < 4:
        raise FitError("need at least 4 samples for an exponential fit")
    if values.shape != times.shape:
        raise FitError("times and values must have the same shape")
    if not np.all(np.isfinite(times)) or not np.all(np.isfinite(values)):
        raise FitError("times and values must be finite")
    weights = _weights_from_errors(errors, values.shape)

    if variant == "decay":
        n_tail = max(times.size // 10, 2)
        floor0 = float(np.mean(values[np.argsort(times)[-n_tail:]]))
        order = np.argsort(times)
        amp0 = float(values[order[0]]) - floor0
        if amp0 == 0.0:
            amp0 = max(float(np.max(values) - floor0), np.finfo(float).eps)
        # crude slope estimate from the log of the positive excess
        excess = (values - floor0) / amp0
        mask = excess > 0.05
        tau0 = float(times[order[-1]] - times[order[0]]) / 3 or 1.0
        if np.count_nonzero(mask) >= 2:
            t_sel = times[mask]
            log_e = np.log(excess[mask])
            slope = np.polyfit(t_sel, log_e, 1)[0]
            if slope < 0:
                tau0 = -1.0 / slope
        initial = np.array([floor0, amp0, tau0])
        model = lambda p: exponential_decay(times, *p)
        names = ["floor", "amplitude", "tau"]
    elif variant == "antibunching":
        contrast0 = min(max(1.0 - float(np.min(values)), 0.05), 1.5)
        below = np.abs(values - 1.0) > contrast0 / np.e
        t_scale = float(np.max(np.abs(times)))
        t10 = float(np.max(np.abs(times[below]))) if np.any(below) else t_scale / 5
        t10 = max(t10, t_scale / 100)
        initial = np.array([contrast0, t10])
        model = lambda p: antibunching(times, *p)
        names = ["contrast", "t1"]
    else:
        raise FitError(f"unknown variant {variant!r}")

    problem = FitProblem(model=model, data=values, initial=initial, weights=weights)
    result = levenberg_marquardt(problem, config)
    result.param_names = names
    tau = float(result.params[-1])
    if tau <= 0:
        raise NonPhysicalFitError(
            f"fitted time constant {tau:g} is not positive"
        )
    return result
