"""Charge-state population dynamics under pulsed illumination.

The bright charge state is pumped by a green repump laser and emptied
both by a spontaneous dark decay and by telecom-light-driven
ionisation.  With n the bright-state population,

    dn/dt = k_pump * P_green * (1 - n) - (k_dark + sigma_ion * P_tel) * n,

which is piecewise linear for piecewise-constant powers, so each pulse
segment evolves in closed form:

    n(t) = n_ss + (n0 - n_ss) * exp(-R t),
    R = k_pump * P_green + k_dark + sigma_ion * P_tel,
    n_ss = k_pump * P_green / R.

During segments with the telecom laser nominally off a configurable
fraction of the nominal power leaks through the modulator and keeps
ionising.  Detection follows the programmed power, not the leakage:

    lambda(t) = r_det * P_tel(t) * n(t) + background,

with P_tel the power written in the segment, so nominally dark
segments contribute only background counts even though the leak still
ionises.  Times are in seconds, powers in microwatts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, InputError
from .fitting.lm import FitError, FitProblem, FitResult, LMConfig, levenberg_marquardt
from .fitting.models import exponential_decay, fit_exponential_decay


@dataclass(frozen=True)
class RateParams:
    """Rate coefficients of the two-state charge model.

    k_pump: green repump rate per unit power, 1/(s uW).
    k_dark: spontaneous decay rate of the bright state, 1/s.
    sigma_ion: telecom ionisation rate per unit power, 1/(s uW).
    r_det: detected count rate per unit telecom power at full
        population, counts/(s uW).
    leak_fraction: fraction of the nominal telecom power leaking
        through the modulator while nominally off.
    """

    k_pump: float
    k_dark: float
    sigma_ion: float
    r_det: float
    leak_fraction: float = 0.0

    def __post_init__(self):
        for name in ("k_pump", "k_dark", "sigma_ion", "r_det", "leak_fraction"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and non-negative")
        if self.leak_fraction >= 1:
            raise ValueError("leak_fraction must be below 1")


# Synthetic fixture coefficients for the two sample types studied with
# this model: a fast sample whose bright state survives 129 ms in the
# dark, and a slow sample with a dark lifetime of several seconds.
SAMPLE_A_RATES = RateParams(
    k_pump=50.0, k_dark=1.0 / 0.129, sigma_ion=1.5, r_det=70.0, leak_fraction=1e-3
)
SAMPLE_B_RATES = RateParams(
    k_pump=50.0, k_dark=0.2, sigma_ion=0.3, r_det=70.0, leak_fraction=1e-3
)


@dataclass(frozen=True)
class Segment:
    """One constant-power stretch of a pulse sequence."""

    duration_s: float
    green_uw: float
    telecom_uw: float

    def __post_init__(self):
        if not (self.duration_s > 0):
            raise ValueError("segment duration must be positive")
        if self.green_uw < 0 or self.telecom_uw < 0:
            raise ValueError("powers must be non-negative")


@dataclass(frozen=True)
class PulseSequence:
    """A repeated train of power segments, binned for photon counting.

    telecom_nominal_uw sets the power used for the leakage estimate
    while the telecom laser is off; None means the maximum telecom
    power appearing in the sequence.
    """

    segments: tuple[Segment, ...]
    repetitions: int = 1
    bin_width_s: float = 0.005
    telecom_nominal_uw: Optional[float] = None

    def __post_init__(self):
        if not self.segments:
            raise ValueError("sequence needs at least one segment")
        object.__setattr__(self, "segments", tuple(self.segments))
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        if not (self.bin_width_s > 0):
            raise ValueError("bin width must be positive")
        if self.telecom_nominal_uw is not None and self.telecom_nominal_uw < 0:
            raise ValueError("nominal telecom power must be non-negative")

    @property
    def period_s(self) -> float:
        return float(sum(seg.duration_s for seg in self.segments))


def _nominal_power(seq: PulseSequence) -> float:
    if seq.telecom_nominal_uw is not None:
        return seq.telecom_nominal_uw
    return max(seg.telecom_uw for seg in seq.segments)


_SEGMENT_KEYS = {"duration_s", "green_uw", "telecom_uw"}
_SEQUENCE_KEYS = {"segments", "repetitions", "bin_width_s", "telecom_nominal_uw"}


def sequence_from_dict(data: dict) -> PulseSequence:
    """Build a PulseSequence from its mapping form, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError("sequence must be a mapping")
    unknown = set(data) - _SEQUENCE_KEYS
    if unknown:
        raise ConfigError(f"unknown sequence key: {sorted(unknown)[0]!r}")
    if "segments" not in data:
        raise ConfigError("sequence is missing 'segments'")
    segments = []
    for i, raw in enumerate(data["segments"]):
        if not isinstance(raw, dict):
            raise ConfigError(f"segment {i} must be a mapping")
        bad = set(raw) - _SEGMENT_KEYS
        if bad:
            raise ConfigError(f"unknown segment key: {sorted(bad)[0]!r}")
        missing = _SEGMENT_KEYS - set(raw)
        if missing:
            raise ConfigError(f"segment {i} is missing {sorted(missing)[0]!r}")
        segments.append(
            Segment(
                duration_s=float(raw["duration_s"]),
                green_uw=float(raw["green_uw"]),
                telecom_uw=float(raw["telecom_uw"]),
            )
        )
    nominal = data.get("telecom_nominal_uw")
    return PulseSequence(
        segments=tuple(segments),
        repetitions=int(data.get("repetitions", 1)),
        bin_width_s=float(data.get("bin_width_s", 0.005)),
        telecom_nominal_uw=None if nominal is None else float(nominal),
    )


def sequence_to_dict(seq: PulseSequence) -> dict:
    """Mapping form of a PulseSequence, inverse of sequence_from_dict."""
    out = {
        "segments": [
            {
                "duration_s": seg.duration_s,
                "green_uw": seg.green_uw,
                "telecom_uw": seg.telecom_uw,
            }
            for seg in seq.segments
        ],
        "repetitions": seq.repetitions,
        "bin_width_s": seq.bin_width_s,
    }
    if seq.telecom_nominal_uw is not None:
        out["telecom_nominal_uw"] = seq.telecom_nominal_uw
    return out


def _segment_rates(params: RateParams, seq: PulseSequence):
    """Per-segment (duration, pump rate, total rate, detected telecom power).

    The total rate uses the effective telecom power (leakage while the
    laser is nominally off); the detected power is the programmed one.
    """
    p_nom = _nominal_power(seq)
    rows = []
    for seg in seq.segments:
        p_eff = seg.telecom_uw if seg.telecom_uw > 0 else params.leak_fraction * p_nom
        alpha = params.k_pump * seg.green_uw
        total = alpha + params.k_dark + params.sigma_ion * p_eff
        rows.append((seg.duration_s, alpha, total, seg.telecom_uw))
    return rows


def _unrolled_segments(params: RateParams, seq: PulseSequence, n_initial: float):
    """Closed-form pieces over all repetitions.

    Returns arrays (start, duration, n_start, n_ss, rate, p_det) with
    one row per segment per repetition.
    """
    base = _segment_rates(params, seq)
    n_rows = seq.repetitions * len(base)
    start = np.empty(n_rows)
    duration = np.empty(n_rows)
    n_start = np.empty(n_rows)
    n_ss = np.empty(n_rows)
    rate = np.empty(n_rows)
    p_det = np.empty(n_rows)
    t = 0.0
    n = float(n_initial)
    k = 0
    for _ in range(seq.repetitions):
        for dur, alpha, total, power in base:
            steady = alpha / total if total > 0 else n
            start[k] = t
            duration[k] = dur
            n_start[k] = n
            n_ss[k] = steady
            rate[k] = total
            p_det[k] = power
            n = steady + (n - steady) * np.exp(-total * dur) if total > 0 else n
            t += dur
            k += 1
    return start, duration, n_start, n_ss, rate, p_det


def population_at(
    params: RateParams,
    seq: PulseSequence,
    times: np.ndarray,
    n_initial: float = 1.0,
) -> np.ndarray:
    """Exact bright-state population at arbitrary times >= 0.

    Times beyond the end of the sequence follow the last segment's
    exponential indefinitely.
    """
    if not (0.0 <= n_initial <= 1.0):
        raise InputError("n_initial must lie in [0, 1]")
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or not np.all(np.isfinite(times)):
        raise InputError("times must be finite and non-negative")
    start, _, n_start, n_ss, rate, _ = _unrolled_segments(params, seq, n_initial)
    idx = np.clip(np.searchsorted(start, times, side="right") - 1, 0, len(start) - 1)
    dt = times - start[idx]
    decay = np.exp(-rate[idx] * dt)
    return n_ss[idx] + (n_start[idx] - n_ss[idx]) * decay


def simulate_population(
    params: RateParams,
    seq: PulseSequence,
    n_initial: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Population sampled at every bin centre over the full repeated train."""
    total = seq.period_s * seq.repetitions
    n_bins = int(np.floor(total / seq.bin_width_s + 1e-9))
    times = (np.arange(n_bins) + 0.5) * seq.bin_width_s
    return times, population_at(params, seq, times, n_initial)


def expected_counts(
    params: RateParams,
    seq: PulseSequence,
    n_initial: float = 1.0,
    background: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Mean detected counts per folded time bin, accumulated over repetitions.

    The period is divided into floor(period / bin width) bins; any
    remainder at the end of the period is discarded.  Each repetition's
    exact integral of lambda(t) over each bin is added to the folded
    histogram, so transients before the periodic steady state are kept.
    """
    if background < 0:
        raise InputError("background must be non-negative")
    period = seq.period_s
    bw = seq.bin_width_s
    n_bins = int(np.floor(period / bw + 1e-9))
    if n_bins < 1:
        raise InputError("bin width exceeds the sequence period")
    edges = np.arange(n_bins + 1) * bw
    mu = np.full(n_bins, background * bw * seq.repetitions)

    start, duration, n_start, n_ss, rate, p_det = _unrolled_segments(
        params, seq, n_initial
    )
    for k in range(len(start)):
        if p_det[k] == 0.0 or params.r_det == 0.0:
            continue
        rep = int(np.floor(start[k] / period + 1e-12))
        s0 = start[k] - rep * period
        s1 = s0 + duration[k]
        first = max(int(np.floor(s0 / bw + 1e-12)), 0)
        last = min(int(np.ceil(s1 / bw - 1e-12)), n_bins)
        if first >= last:
            continue
        a = np.maximum(edges[first:last], s0)
        b = np.minimum(edges[first + 1 : last + 1], s1)
        good = b > a
        if rate[k] > 0:
            ea = np.exp(-rate[k] * (a - s0))
            eb = np.exp(-rate[k] * (b - s0))
            integral = n_ss[k] * (b - a) + (n_start[k] - n_ss[k]) / rate[k] * (ea - eb)
        else:
            integral = n_start[k] * (b - a)
        mu[first:last][good] += params.r_det * p_det[k] * integral[good]
    centers = (edges[:-1] + edges[1:]) / 2
    return centers, mu


@dataclass
class PlTrace:
    """Binned photon-count trace folded over sequence repetitions."""

    times: np.ndarray
    counts: np.ndarray
    expected: np.ndarray
    bin_width_s: float
    repetitions: int


def simulate_pl_trace(
    params: RateParams,
    seq: PulseSequence,
    seed: int,
    n_initial: float = 1.0,
    background: float = 0.0,
) -> PlTrace:
    """Poisson-sampled photon counts around the exact per-bin means."""
    times, mu = expected_counts(params, seq, n_initial, background)
    rng = np.random.default_rng(seed)
    counts = rng.poisson(mu).astype(float)
    return PlTrace(
        times=times,
        counts=counts,
        expected=mu,
        bin_width_s=seq.bin_width_s,
        repetitions=seq.repetitions,
    )


def power_probe_sequence(
    telecom_uw: float,
    *,
    repump_s: float = 0.3,
    probe_s: float = 0.7,
    green_uw: float = 14.0,
    bin_width_s: float = 0.005,
    repetitions: int = 200,
) -> PulseSequence:
    """Green repump followed immediately by a telecom probe pulse."""
    return PulseSequence(
        segments=(
            Segment(repump_s, green_uw, 0.0),
            Segment(probe_s, 0.0, telecom_uw),
        ),
        repetitions=repetitions,
        bin_width_s=bin_width_s,
    )


def delay_probe_sequence(
    delay_s: float,
    *,
    repump_s: float = 0.3,
    probe_s: float = 0.3,
    green_uw: float = 14.0,
    telecom_uw: float = 2.2,
    bin_width_s: float = 0.005,
    repetitions: int = 200,
) -> PulseSequence:
    """Repump, dark storage delay, then a telecom probe pulse."""
    segments = [Segment(repump_s, green_uw, 0.0)]
    if delay_s > 0:
        segments.append(Segment(delay_s, 0.0, 0.0))
    segments.append(Segment(probe_s, 0.0, telecom_uw))
    return PulseSequence(
        segments=tuple(segments), repetitions=repetitions, bin_width_s=bin_width_s
    )


def probe_window(seq: PulseSequence) -> tuple[float, float]:
    """Folded-time interval covered by the final segment of the sequence."""
    end = seq.period_s
    return end - seq.segments[-1].duration_s, end


def crop_to_probe(trace: PlTrace, seq: PulseSequence) -> tuple[np.ndarray, np.ndarray]:
    """Counts of the probe window with times rebased to the probe start."""
    t0, t1 = probe_window(seq)
    mask = (trace.times >= t0) & (trace.times < t1)
    return trace.times[mask] - t0, trace.counts[mask]


@dataclass
class PowerSeriesResult:
    """Ionisation analysis of probe decays at several telecom powers.

    rate_points holds (power_uw, decay rate 1/s, rate uncertainty); the
    affine fit rate = intercept + slope * power estimates the dark
    decay rate (intercept) and ionisation coefficient (slope).
    """

    intercept: float
    slope: float
    intercept_err: float
    slope_err: float
    rate_points: list
    converged: bool
    linear_fit: FitResult
    trace_fits: list


def _fit_probe_decay(times, counts, config):
    """Decay fit of Poisson-binned counts with model-based reweighting.

    Weighting by the observed counts biases the time constant low when
    many bins are nearly empty, so the fit is repeated once with errors
    taken from the first pass's predicted counts.
    """
    counts = np.asarray(counts, dtype=float)
    errors = np.sqrt(np.maximum(counts, 1.0))
    fit = fit_exponential_decay(times, counts, errors, variant="decay", config=config)
    predicted = exponential_decay(np.asarray(times, dtype=float), *fit.params)
    errors = np.sqrt(np.maximum(predicted, 1.0))
    return fit_exponential_decay(times, counts, errors, variant="decay", config=config)


def analyze_power_series(
    series: Sequence[tuple[float, np.ndarray, np.ndarray]],
    *,
    config: Optional[LMConfig] = None,
) -> PowerSeriesResult:
    """Fit per-power probe decays and the affine rate-versus-power law.

    series holds (power_uw, times_s, counts) for each probe trace,
    times starting at the probe onset.  Requires at least 3 distinct
    powers; traces whose decay fit fails are dropped and flagged via
    converged = False.
    """
    if len({p for p, _, _ in series}) < 3:
        raise FitError("need probe traces at three or more distinct powers")
    rate_points = []
    trace_fits = []
    all_ok = True
    for power, times, counts in series:
        try:
            fit = _fit_probe_decay(times, counts, config)
        except FitError:
            all_ok = False
            trace_fits.append(None)
            continue
        trace_fits.append(fit)
        all_ok = all_ok and fit.converged
        tau = float(fit.params[2])
        tau_err = float(fit.uncertainties[2])
        rate_points.append((float(power), 1.0 / tau, tau_err / tau**2))
    if len(rate_points) < 3:
        raise FitError("fewer than 3 usable probe decays")

    powers = np.array([p for p, _, _ in rate_points])
    rates = np.array([r for _, r, _ in rate_points])
    rate_errs = np.array([e for _, _, e in rate_points])
    weights = 1.0 / np.maximum(rate_errs, 1e-12) ** 2
    slope0 = (rates[-1] - rates[0]) / (powers[-1] - powers[0])
    problem = FitProblem(
        model=lambda p: p[0] + p[1] * powers,
        data=rates,
        initial=np.array([max(rates.min(), 1e-6), max(slope0, 1e-6)]),
        weights=weights,
    )
    linear_fit = levenberg_marquardt(problem, config)
    linear_fit.param_names = ["intercept", "slope"]
    return PowerSeriesResult(
        intercept=float(linear_fit.params[0]),
        slope=float(linear_fit.params[1]),
        intercept_err=float(linear_fit.uncertainties[0]),
        slope_err=float(linear_fit.uncertainties[1]),
        rate_points=rate_points,
        converged=bool(all_ok and linear_fit.converged),
        linear_fit=linear_fit,
        trace_fits=trace_fits,
    )


@dataclass
class DelaySweepResult:
    """Dark storage analysis from probe intensity versus delay."""

    storage_time_s: float
    storage_time_err: float
    peak_points: list
    probe_tau_s: float
    converged: bool
    decay_fit: FitResult
    joint_fit: FitResult


def _joint_probe_fit(times_list, counts_list, config):
    """Fit all probe traces together with a shared decay constant.

    Parameters are [tau, floor, level_0, ..., level_{n-1}] where trace
    i is modelled as floor + level_i * exp(-t / tau).
    """
    counts_all = np.concatenate(counts_list)
    n_traces = len(times_list)

    def model(p):
        tau = p[0]
        return np.concatenate(
            [p[1] + p[2 + i] * np.exp(-t / tau) for i, t in enumerate(times_list)]
        )

    span = max(float(t[-1] - t[0]) for t in times_list)
    floor0 = float(np.min(counts_all))
    levels0 = [
        max(float(np.mean(c[:3])) - floor0, 1.0) for c in counts_list
    ]
    initial = np.array([span / 2.0, floor0] + levels0)
    lower = np.full(initial.size, -np.inf)
    lower[0] = span * 1e-6  # the shared constant must stay positive
    bounds = (lower, np.full(initial.size, np.inf))

    errors = np.sqrt(np.maximum(counts_all, 1.0))
    problem = FitProblem(
        model=model,
        data=counts_all,
        initial=initial,
        weights=1.0 / errors**2,
        bounds=bounds,
    )
    fit = levenberg_marquardt(problem, config)
    predicted = model(fit.params)
    errors = np.sqrt(np.maximum(predicted, 1.0))
    problem = FitProblem(
        model=model,
        data=counts_all,
        initial=fit.params,
        weights=1.0 / errors**2,
        bounds=bounds,
    )
    fit = levenberg_marquardt(problem, config)
    fit.param_names = ["tau", "floor"] + [f"level_{i}" for i in range(n_traces)]
    return fit


def analyze_delay_sweep(
    sweep: Sequence[tuple[float, np.ndarray, np.ndarray]],
    *,
    config: Optional[LMConfig] = None,
) -> DelaySweepResult:
    """Fit the probe count level against storage delay.

    sweep holds (delay_s, times_s, counts) probe traces.  The probe
    power is the same for every delay, so all traces share one probe
    decay constant: they are fit jointly with a common tau and floor
    and one onset level per delay.  The onset levels estimate the
    population surviving each delay and decay with the storage time
    constant.
    """
    if len({d for d, _, _ in sweep}) < 3:
        raise FitError("need probe traces at three or more distinct delays")
    delays = np.array([float(d) for d, _, _ in sweep])
    times_list = [np.asarray(t, dtype=float) for _, t, _ in sweep]
    counts_list = [np.asarray(c, dtype=float) for _, _, c in sweep]

    joint_fit = _joint_probe_fit(times_list, counts_list, config)
    levels = joint_fit.params[2:]
    level_errs = np.maximum(joint_fit.uncertainties[2:], 1e-12)
    peak_points = [
        (float(d), float(a), float(e))
        for d, a, e in zip(delays, levels, level_errs)
    ]

    decay_fit = fit_exponential_decay(
        delays, levels, level_errs, variant="decay", config=config
    )
    return DelaySweepResult(
        storage_time_s=float(decay_fit.params[2]),
        storage_time_err=float(decay_fit.uncertainties[2]),
        peak_points=peak_points,
        probe_tau_s=float(joint_fit.params[0]),
        converged=bool(joint_fit.converged and decay_fit.converged),
        decay_fit=decay_fit,
        joint_fit=joint_fit,
    )
