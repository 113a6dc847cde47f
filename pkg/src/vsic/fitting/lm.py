"""Damped least-squares fitting engine.

A small Levenberg-Marquardt implementation tailored to the package's
needs: weighted residuals, optional box bounds, finite-difference
Jacobians and a covariance estimate from the final normal equations.
The weighted sum of squared errors never increases across accepted
steps; iteration stops when the relative SSE change drops below
sse_rtol or the accepted step norm below step_atol.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..errors import VsicError


class FitError(VsicError):
    """The fit could not be carried out (bad inputs, singular system)."""


class NonPhysicalFitError(FitError):
    """The fit converged to a physically meaningless parameter set."""


@dataclass
class LMConfig:
    max_iterations: int = 500
    sse_rtol: float = 1e-10
    step_atol: float = 1e-12
    jac_rel_step: float = 1e-6
    jac_abs_step: float = 1e-9
    damping_init: float = 1e-3
    damping_increase: float = 10.0
    damping_decrease: float = 0.1
    damping_max: float = 1e12


@dataclass
class FitProblem:
    """A weighted least-squares problem.

    model maps a parameter vector to model values on the data grid.
    weights multiply squared residuals; they must be finite and
    positive (pass 1/sigma^2 for Gaussian uncertainties).  bounds is an
    optional (lower, upper) pair of arrays; infinities mark free sides.
    """

    model: Callable[[np.ndarray], np.ndarray]
    data: np.ndarray
    initial: np.ndarray
    weights: Optional[np.ndarray] = None
    bounds: Optional[tuple[np.ndarray, np.ndarray]] = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        self.initial = np.asarray(self.initial, dtype=float)
        if self.data.ndim != 1 or self.data.size == 0:
            raise FitError("data must be a non-empty 1-D array")
        if self.initial.ndim != 1 or self.initial.size == 0:
            raise FitError("initial parameters must be a non-empty 1-D array")
        if not np.all(np.isfinite(self.data)):
            raise FitError("data contains non-finite values")
        if not np.all(np.isfinite(self.initial)):
            raise FitError("initial parameters contain non-finite values")
        if self.weights is None:
            self.weights = np.ones_like(self.data)
        else:
            self.weights = np.asarray(self.weights, dtype=float)
            if self.weights.shape != self.data.shape:
                raise FitError("weights must match the data shape")
            if not np.all(np.isfinite(self.weights)) or np.any(self.weights <= 0):
                raise FitError("weights must be finite and positive")
        if self.bounds is not None:
            lo = np.asarray(self.bounds[0], dtype=float)
            hi = np.asarray(self.bounds[1], dtype=float)
            if lo.shape != self.initial.shape or hi.shape != self.initial.shape:
                raise FitError("bounds must match the parameter shape")
            if np.any(lo > hi):
                raise FitError("lower bounds exceed upper bounds")
            if np.any(self.initial < lo) or np.any(self.initial > hi):
                raise FitError("initial parameters violate the bounds")
            self.bounds = (lo, hi)


@dataclass
class FitResult:
    """Outcome of a least-squares fit.

    covariance is the inverse of the weighted normal matrix at the
    solution; uncertainties are the square roots of its diagonal.
    reduced_chi2 is SSE / (n_data - n_params), NaN when not defined.
    """

    params: np.ndarray
    covariance: np.ndarray
    reduced_chi2: float
    converged: bool
    iterations: int
    sse: float
    message: str = ""
    param_names: list = field(default_factory=list)

    @property
    def uncertainties(self) -> np.ndarray:
        diag = np.diag(self.covariance)
        return np.sqrt(np.where(diag > 0, diag, 0.0))


def _clip(p: np.ndarray, bounds) -> np.ndarray:
    if bounds is None:
        return p
    return np.clip(p, bounds[0], bounds[1])


def _eval_model(model, p: np.ndarray, n_data: int) -> np.ndarray:
    f = np.asarray(model(p), dtype=float)
    if f.shape != (n_data,):
        raise FitError(
            f"model returned shape {f.shape}, expected ({n_data},)"
        )
    if not np.all(np.isfinite(f)):
        raise FitError(
            f"model returned non-finite values at parameters {p.tolist()}"
        )
    return f


def _jacobian(model, p: np.ndarray, bounds, n_data: int, config: LMConfig) -> np.ndarray:
    """Central finite-difference Jacobian, bound-aware.

    Evaluation points are clipped into the box, and the actual parameter
    difference is used as the denominator, so columns degrade to
    one-sided differences at an active bound.
    """
    n = p.size
    jac = np.empty((n_data, n))
    for j in range(n):
        h = max(config.jac_rel_step * abs(p[j]), config.jac_abs_step)
        p_hi = p.copy()
        p_lo = p.copy()
        p_hi[j] += h
        p_lo[j] -= h
        p_hi = _clip(p_hi, bounds)
        p_lo = _clip(p_lo, bounds)
        denom = p_hi[j] - p_lo[j]
        if denom == 0.0:
            jac[:, j] = 0.0
            continue
        jac[:, j] = (_eval_model(model, p_hi, n_data) - _eval_model(model, p_lo, n_data)) / denom
    return jac


def levenberg_marquardt(problem: FitProblem, config: Optional[LMConfig] = None) -> FitResult:
    """Minimise the weighted SSE of problem starting from problem.initial."""
    cfg = config or LMConfig()
    n_data = problem.data.size
    sqrt_w = np.sqrt(problem.weights)
    p = _clip(problem.initial.copy(), problem.bounds)

    def residuals(params):
        return sqrt_w * (problem.data - _eval_model(problem.model, params, n_data))

    r = residuals(p)
    sse = float(r @ r)
    lam = cfg.damping_init
    converged = False
    message = ""
    iterations = 0

    for iterations in range(1, cfg.max_iterations + 1):
        jac = _jacobian(problem.model, p, problem.bounds, n_data, cfg)
        jw = sqrt_w[:, None] * jac
        normal = jw.T @ jw
        grad = jw.T @ r
        diag = np.diag(normal).copy()
        diag[diag <= 0] = 1.0

        accepted = False
        while lam <= cfg.damping_max:
            try:
                step = np.linalg.solve(normal + lam * np.diag(diag), grad)
            except np.linalg.LinAlgError:
                lam *= cfg.damping_increase
                continue
            if not np.all(np.isfinite(step)):
                lam *= cfg.damping_increase
                continue
            p_try = _clip(p + step, problem.bounds)
            r_try = residuals(p_try)
            sse_try = float(r_try @ r_try)
            if sse_try <= sse:
                accepted = True
                break
            lam *= cfg.damping_increase

        if not accepted:
            message = "damping limit reached without an acceptable step"
            break

        step_norm = float(np.linalg.norm(p_try - p))
        sse_drop = sse - sse_try
        p, r, sse = p_try, r_try, sse_try
        lam = max(lam * cfg.damping_decrease, 1e-14)
        if sse_drop <= cfg.sse_rtol * max(sse, np.finfo(float).tiny):
            converged = True
            message = "relative SSE change below tolerance"
            break
        if step_norm <= cfg.step_atol:
            converged = True
            message = "step norm below tolerance"
            break
    else:
        message = "maximum iterations reached"

    jac = _jacobian(problem.model, p, problem.bounds, n_data, cfg)
    jw = sqrt_w[:, None] * jac
    normal = jw.T @ jw
    try:
        covariance = np.linalg.inv(normal)
    except np.linalg.LinAlgError:
        covariance = np.linalg.pinv(normal)
        message += "; covariance from pseudo-inverse (singular normal matrix)"
    dof = n_data - p.size
    reduced_chi2 = sse / dof if dof > 0 else float("nan")
    return FitResult(
        params=p,
        covariance=covariance,
        reduced_chi2=float(reduced_chi2),
        converged=converged,
        iterations=iterations,
        sse=sse,
        message=message,
    )
