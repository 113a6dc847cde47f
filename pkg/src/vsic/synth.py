"""Seeded synthetic datasets for testing and demonstration.

Every generator takes an integer seed and derives all randomness from a
single numpy Generator, so outputs are reproducible byte for byte.  The
datasets mimic the measurement formats the analysis code consumes but
are synthetic throughout; none of the values are measurements.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .charge import (
    PulseSequence,
    RateParams,
    crop_to_probe,
    delay_probe_sequence,
    power_probe_sequence,
    simulate_pl_trace,
)
from .constants import DEFAULT_CONSTANTS, KdParams, SpinConstants, default_kd_params
from .detection import PleMapStack
from .errors import InputError
from .transitions import (
    Spectrum,
    SpectrumModelParams,
    field_catalog,
    lorentzian_comb,
)

# Default spectrum-model parameters for the three-field dataset: one
# shared linewidth and gap, per-field amplitude (GHz/s) and offset
# (counts/s) pairs.
DEFAULT_GAMMA_MHZ = 1038.0
DEFAULT_DELTA_CR_MHZ = 234425594.0
DEFAULT_FIELD_SETTINGS = {
    0.0: (22.6, 24.9),
    600.0: (19.5, 23.4),
    1000.0: (23.1, 27.6),
}


def default_grid(
    delta_cr: float = DEFAULT_DELTA_CR_MHZ,
    span_mhz: float = 3000.0,
    step_mhz: float = 40.0,
) -> np.ndarray:
    """Symmetric frequency grid around the optical gap."""
    n = int(np.floor(span_mhz / step_mhz))
    return delta_cr + step_mhz * np.arange(-n, n + 1)


def gen_three_field_dataset(
    seed: int,
    *,
    fields: Sequence[float] = (0.0, 600.0, 1000.0),
    gamma: float = DEFAULT_GAMMA_MHZ,
    delta_cr: float = DEFAULT_DELTA_CR_MHZ,
    field_settings: Optional[dict] = None,
    grid: Optional[np.ndarray] = None,
    integration_s: float = 45.0,
    ground: Optional[KdParams] = None,
    excited: Optional[KdParams] = None,
    constants: SpinConstants = DEFAULT_CONSTANTS,
) -> dict[tuple[float, str], Spectrum]:
    """Noisy two-polarisation spectra at several fields.

    Counts are Poisson draws of rate * integration time, converted back
    to rates, with matching standard errors; this is the shape the
    global spectrum fit expects.
    """
    if ground is None or excited is None:
        default_g, default_e = default_kd_params()
        ground = ground or default_g
        excited = excited or default_e
    settings = field_settings or DEFAULT_FIELD_SETTINGS
    if grid is None:
        grid = default_grid(delta_cr)
    rng = np.random.default_rng(seed)
    dataset = {}
    for b in fields:
        try:
            amplitude, offset = settings[float(b)]
        except KeyError:
            raise InputError(f"no amplitude/offset setting for field {b} G")
        params = SpectrumModelParams(
            gamma=gamma, delta_cr=delta_cr, amplitude_a=amplitude, offset_o=offset
        )
        for pol in ("+", "-"):
            catalog = field_catalog(ground, excited, b, pol, constants)
            freqs = np.array([ln.frequency for ln in catalog])
            weights = np.array([ln.weight for ln in catalog])
            rate = lorentzian_comb(grid, freqs, weights, params)
            counts = rng.poisson(rate * integration_s).astype(float)
            dataset[(float(b), pol)] = Spectrum(
                frequencies=grid.copy(),
                counts=counts / integration_s,
                errors=np.sqrt(np.maximum(counts, 1.0)) / integration_s,
            )
    return dataset


def gen_g2_trace(
    seed: int,
    *,
    contrast: float = 0.828,
    t1_us: float = 0.048,
    span_us: float = 0.3,
    step_us: float = 0.004,
    noise: float = 0.06,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Normalised intensity-correlation trace with Gaussian noise.

    Returns (delays in us, g2 values, per-point errors).
    """
    rng = np.random.default_rng(seed)
    n = int(np.floor(span_us / step_us))
    times = step_us * np.arange(-n, n + 1)
    clean = 1.0 - contrast * np.exp(-np.abs(times) / t1_us)
    values = clean + noise * rng.standard_normal(times.shape)
    errors = np.full(times.shape, noise)
    return times, values, errors


@dataclass
class EmitterTruth:
    """Ground truth of a synthetic emitter map stack."""

    rows: np.ndarray
    cols: np.ndarray
    centers_mhz: np.ndarray
    amplitudes: np.ndarray
    spectral_sigma_mhz: float


def _place_emitters(
    rng: np.random.Generator,
    n_emitters: int,
    shape: tuple[int, int],
    margin: float,
    min_separation: float,
    max_tries: int = 20000,
) -> tuple[np.ndarray, np.ndarray]:
    """Uniform positions with a minimum pairwise separation."""
    rows = []
    cols = []
    tries = 0
    while len(rows) < n_emitters:
        tries += 1
        if tries > max_tries:
            raise InputError(
                "could not place emitters with the requested separation; "
                "reduce n_emitters or min_separation"
            )
        r = rng.uniform(margin, shape[0] - 1 - margin)
        c = rng.uniform(margin, shape[1] - 1 - margin)
        if all(
            (r - rr) ** 2 + (c - cc) ** 2 >= min_separation**2
            for rr, cc in zip(rows, cols)
        ):
            rows.append(r)
            cols.append(c)
    return np.array(rows), np.array(cols)


def gen_emitter_stack(
    seed: int,
    kind: str = "enriched",
    *,
    n_emitters: Optional[int] = None,
    shape: Optional[tuple[int, int]] = None,
    pixel_size_um: float = 0.1,
    confocal_width_px: float = 5.0,
    integration_s: float = 1.0,
    background_rate: float = 5.0,
    peak_rate: float = 150.0,
    spectral_sigma_mhz: float = 180.0,
) -> tuple[PleMapStack, EmitterTruth]:
    """Synthetic excitation-map stack with known emitter positions.

    kind "enriched" draws emitter lines from one narrow distribution
    (isotopically purified host); kind "natural" spreads them over
    several GHz in three clusters.  Per-pixel values are Poisson counts
    converted back to rates.
    """
    rng = np.random.default_rng(seed)
    if kind == "enriched":
        n_emitters = 50 if n_emitters is None else n_emitters
        shape = (120, 120) if shape is None else shape
        detunings = np.arange(-400.0, 901.0, 50.0)
        centers = rng.normal(227.0, 105.0, size=n_emitters)
    elif kind == "natural":
        n_emitters = 90 if n_emitters is None else n_emitters
        shape = (300, 300) if shape is None else shape
        detunings = np.arange(-4000.0, 5001.0, 250.0)
        cluster_centers = np.array([-2000.0, 200.0, 2500.0])
        cluster_weights = np.array([0.45, 0.33, 0.22])
        assignment = rng.choice(3, size=n_emitters, p=cluster_weights)
        centers = rng.normal(cluster_centers[assignment], 300.0)
    else:
        raise InputError(f"unknown stack kind {kind!r}")

    rows, cols = _place_emitters(
        rng,
        n_emitters,
        shape,
        margin=confocal_width_px,
        min_separation=2.0 * confocal_width_px,
    )
    amplitudes = peak_rate * rng.uniform(0.7, 1.3, size=n_emitters)

    sigma_px = confocal_width_px / 2.355
    yy, xx = np.mgrid[0 : shape[0], 0 : shape[1]]
    rate = np.full((detunings.size, shape[0], shape[1]), background_rate)
    for k in range(n_emitters):
        spatial = np.exp(
            -((yy - rows[k]) ** 2 + (xx - cols[k]) ** 2) / (2 * sigma_px**2)
        )
        spectral = np.exp(
            -0.5 * ((detunings - centers[k]) / spectral_sigma_mhz) ** 2
        )
        rate += amplitudes[k] * spectral[:, None, None] * spatial[None, :, :]

    counts = rng.poisson(rate * integration_s)
    stack = PleMapStack(
        maps=counts / integration_s,
        detunings=detunings,
        pixel_size_um=pixel_size_um,
        confocal_width_px=confocal_width_px,
    )
    truth = EmitterTruth(
        rows=rows,
        cols=cols,
        centers_mhz=centers,
        amplitudes=amplitudes,
        spectral_sigma_mhz=spectral_sigma_mhz,
    )
    return stack, truth


def gen_power_series(
    seed: int,
    params: RateParams,
    powers_uw: Sequence[float],
    *,
    repump_s: float = 0.3,
    probe_s: float = 0.7,
    green_uw: float = 14.0,
    bin_width_s: float = 0.005,
    repetitions: int = 200,
    background: float = 0.0,
) -> list[tuple[float, np.ndarray, np.ndarray]]:
    """Probe-window photon traces at several telecom powers."""
    rng = np.random.default_rng(seed)
    series = []
    for power in powers_uw:
        seq = power_probe_sequence(
            power,
            repump_s=repump_s,
            probe_s=probe_s,
            green_uw=green_uw,
            bin_width_s=bin_width_s,
            repetitions=repetitions,
        )
        trace = simulate_pl_trace(
            params, seq, seed=int(rng.integers(2**31)), background=background
        )
        times, counts = crop_to_probe(trace, seq)
        series.append((float(power), times, counts))
    return series


def gen_delay_sweep(
    seed: int,
    params: RateParams,
    delays_s: Sequence[float],
    *,
    repump_s: float = 0.3,
    probe_s: float = 0.3,
    green_uw: float = 14.0,
    telecom_uw: float = 2.2,
    bin_width_s: float = 0.005,
    repetitions: int = 200,
    background: float = 0.0,
) -> list[tuple[float, np.ndarray, np.ndarray]]:
    """Probe-window photon traces after varying dark storage delays."""
    rng = np.random.default_rng(seed)
    sweep = []
    for delay in delays_s:
        seq = delay_probe_sequence(
            delay,
            repump_s=repump_s,
            probe_s=probe_s,
            green_uw=green_uw,
            telecom_uw=telecom_uw,
            bin_width_s=bin_width_s,
            repetitions=repetitions,
        )
        trace = simulate_pl_trace(
            params, seq, seed=int(rng.integers(2**31)), background=background
        )
        times, counts = crop_to_probe(trace, seq)
        sweep.append((float(delay), times, counts))
    return sweep
