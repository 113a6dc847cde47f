"""Gaussian mixture decomposition of a single spectrum.

Used for per-spot excitation spectra, where each spot may show one or a
few peaks of different widths.  Components are added greedily, each
candidate refit with the damped least-squares engine, and the final
component count is chosen by the Bayesian information criterion
chi^2 + k ln N, comparing against a flat-baseline model so pure noise
yields no components.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..transitions import Spectrum
from .lm import FitError, FitProblem, LMConfig, levenberg_marquardt


def gaussian_mixture(x: np.ndarray, params: np.ndarray) -> np.ndarray:
    """baseline + sum of Gaussians; params = [b, A1, c1, s1, A2, c2, s2, ...]."""
    x = np.asarray(x, dtype=float)
    out = np.full(x.shape, params[0], dtype=float)
    for k in range(1, len(params), 3):
        amp, center, sigma = params[k : k + 3]
        out += amp * np.exp(-0.5 * ((x - center) / sigma) ** 2)
    return out


def _bic(sse: float, n_params: int, n_data: int) -> float:
    return sse + n_params * np.log(n_data)


def fit_gaussian_mixture(
    spectrum: Spectrum,
    max_components: int = 3,
    *,
    config: Optional[LMConfig] = None,
) -> list[tuple[float, float, float]]:
    """Decompose a spectrum into up to max_components Gaussian peaks.

    Returns (center, width, amplitude) triples sorted by center, where
    width is the Gaussian standard deviation in grid units.  A spectrum
    indistinguishable from its flat baseline returns an empty list.
    """
    if max_components < 1:
        raise FitError("max_components must be at least 1")
    x = spectrum.frequencies
    y = spectrum.counts
    weights = 1.0 / spectrum.errors**2
    n = x.size
    if n < 5:
        raise FitError("need at least 5 samples for a mixture fit")
    dx = float(np.min(np.diff(x)))
    span = float(x[-1] - x[0])

    # flat-baseline reference model
    base = float(np.sum(weights * y) / np.sum(weights))
    sse0 = float(np.sum(weights * (y - base) ** 2))
    best_bic = _bic(sse0, 1, n)
    best_params = np.array([base])

    params = best_params
    current_model = np.full(n, base)
    for n_comp in range(1, max_components + 1):
        residual = y - current_model
        i_peak = int(np.argmax(residual))
        amp0 = max(float(residual[i_peak]), np.finfo(float).eps)
        center0 = float(x[i_peak])
        # width from the half-maximum extent of the residual peak
        above = residual > amp0 / 2
        if np.count_nonzero(above) >= 2:
            idx = np.flatnonzero(above)
            sigma0 = max(float(x[idx[-1]] - x[idx[0]]) / 2.355, dx)
        else:
            sigma0 = max(span / 20, dx)

        initial = np.concatenate([params, [amp0, center0, sigma0]])
        n_params = initial.size
        lower = np.full(n_params, -np.inf)
        upper = np.full(n_params, np.inf)
        lower[0] = 0.0
        for k in range(1, n_params, 3):
            lower[k] = 0.0  # amplitude
            lower[k + 1], upper[k + 1] = x[0], x[-1]  # center inside the grid
            lower[k + 2], upper[k + 2] = dx / 2, 2 * span  # width
        initial = np.clip(initial, lower, upper)

        problem = FitProblem(
            model=lambda p: gaussian_mixture(x, p),
            data=y,
            initial=initial,
            weights=weights,
            bounds=(lower, upper),
        )
        result = levenberg_marquardt(problem, config)
        bic = _bic(result.sse, n_params, n)
        params = result.params
        current_model = gaussian_mixture(x, params)
        if bic < best_bic:
            best_bic = bic
            best_params = params

    components = []
    for k in range(1, len(best_params), 3):
        amp, center, sigma = best_params[k : k + 3]
        components.append((float(center), float(sigma), float(amp)))
    components.sort(key=lambda c: c[0])
    return components
