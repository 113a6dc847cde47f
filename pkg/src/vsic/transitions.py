"""Optical transition catalogue and composite emission spectrum.

The optical dipole of the centre conserves the pseudo-spin projection:
circular polarisation sigma+ couples to the spin-up sector and sigma-
to the spin-down sector.  The transition amplitude between a ground
level |g> and an excited level |e> is therefore the overlap of the two
16-component eigenvectors restricted to one pseudo-spin block,

    amp = <e| (|sigma><sigma| x 1_nuclear) |g>,

and the line weight is |amp|^2.  Because the hyperfine tensors of the
two doublets differ, the nuclear eigenbasis rotates between ground and
excited state and nominally forbidden lines acquire weight.

A composite spectrum is a sum of Lorentzians with one shared linewidth:

    counts(f) = o + a * sum_lines gamma * w / (4 (f - f_line)^2 + gamma^2)

so an isolated line of unit weight peaks at o + a / gamma.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constants import DEFAULT_CONSTANTS, KdParams, SpinConstants
from .errors import NoPeakError
from .spin import SPIN_DOWN, SPIN_UP, HyperfineLevel, kd_levels

# Circular polarisation to pseudo-spin sector.  The sign choice fixes
# which Zeeman branch each polarisation addresses; with g_z(excited) >
# g_z(ground) the sigma+ component sits above the zero-field line.
POLARIZATION_SECTOR = {"+": SPIN_UP, "-": SPIN_DOWN}

DEFAULT_WEIGHT_FLOOR = 1e-6


@dataclass(frozen=True)
class TransitionLine:
    """One optical line of the catalogue.

    frequency: line position in MHz (relative to the supplied offset).
    weight: squared transition amplitude, in (0, 1].
    polarization: "+" or "-".
    gs_label, es_label: (sigma, m) labels of the connected levels.
    kind: "conserving" when both labels match, else "polarizing".
    """

    frequency: float
    weight: float
    polarization: str
    gs_label: tuple[int, float]
    es_label: tuple[int, float]
    kind: str


def transition_catalog(
    gs_levels: list[HyperfineLevel],
    es_levels: list[HyperfineLevel],
    polarization: str,
    *,
    weight_floor: float = DEFAULT_WEIGHT_FLOOR,
    frequency_offset: float = 0.0,
) -> list[TransitionLine]:
    """All lines of one polarisation with weight above weight_floor.

    Line frequencies are E_excited - E_ground + frequency_offset; pass a
    negative electronic gap as offset to recentre on the zero-field
    line.  The result is sorted by frequency, then weight, for a
    reproducible order.
    """
    if polarization not in POLARIZATION_SECTOR:
        raise ValueError(f"polarization must be '+' or '-', got {polarization!r}")
    if not gs_levels or not es_levels:
        raise ValueError("level lists must be non-empty")
    dim = gs_levels[0].state.shape[0]
    if any(lv.state.shape != (dim,) for lv in gs_levels + es_levels):
        raise ValueError("all levels must share one basis dimension")

    n_nuc = dim // 2
    sector = POLARIZATION_SECTOR[polarization]
    block = slice(0, n_nuc) if sector == SPIN_UP else slice(n_nuc, dim)

    lines = []
    for es in es_levels:
        bra = es.state[block].conj()
        for gs in gs_levels:
            amp = np.sum(bra * gs.state[block])
            weight = float(np.abs(amp) ** 2)
            if weight <= weight_floor:
                continue
            gs_label = (gs.sigma_label, gs.m_label)
            es_label = (es.sigma_label, es.m_label)
            lines.append(
                TransitionLine(
                    frequency=float(es.energy - gs.energy + frequency_offset),
                    weight=weight,
                    polarization=polarization,
                    gs_label=gs_label,
                    es_label=es_label,
                    kind="conserving" if gs_label == es_label else "polarizing",
                )
            )
    lines.sort(key=lambda ln: (ln.frequency, ln.weight))
    return lines


def field_catalog(
    ground: KdParams,
    excited: KdParams,
    b_gauss: float,
    polarization: str,
    constants: SpinConstants = DEFAULT_CONSTANTS,
    *,
    weight_floor: float = DEFAULT_WEIGHT_FLOOR,
) -> list[TransitionLine]:
    """Catalogue at one field, recentred on the electronic gap.

    Frequencies are relative to E_k(excited) - E_k(ground), so the
    zero-field pattern is centred near zero and absolute positions are
    recovered by adding the optical gap of the spectrum model.

    At zero field the Hamiltonian commutes with time inversion, which
    swaps the two pseudo-spin sectors, so the sigma- catalogue is the
    exact label-flipped image of the sigma+ catalogue.  It is built
    that way here, making the two polarisations agree to the last bit
    instead of merely to rounding error.
    """
    if b_gauss == 0.0 and polarization == "-":
        plus = field_catalog(
            ground, excited, 0.0, "+", constants, weight_floor=weight_floor
        )
        return [_time_reversed_line(ln) for ln in plus]
    gs = kd_levels(ground, b_gauss, constants)
    es = kd_levels(excited, b_gauss, constants)
    return transition_catalog(
        gs,
        es,
        polarization,
        weight_floor=weight_floor,
        frequency_offset=-(excited.E_k - ground.E_k),
    )


def _time_reversed_line(line: TransitionLine) -> TransitionLine:
    """The sigma- partner of a sigma+ line under time inversion.

    Both levels map to their time-reversed partners, flipping sigma and
    m; frequency, weight and kind are unchanged.
    """
    return TransitionLine(
        frequency=line.frequency,
        weight=line.weight,
        polarization="-",
        gs_label=(-line.gs_label[0], -line.gs_label[1]),
        es_label=(-line.es_label[0], -line.es_label[1]),
        kind=line.kind,
    )


@dataclass(frozen=True)
class SpectrumModelParams:
    """Shared-linewidth Lorentzian comb parameters.

    gamma: common FWHM of all lines, MHz.
    delta_cr: optical gap added to every catalogue frequency, MHz.
    amplitude_a: overall amplitude in GHz/s (count rate integrated over
        frequency is pi/4 * a per unit weight).
    offset_o: flat background count rate, counts/s.
    """

    gamma: float
    delta_cr: float
    amplitude_a: float
    offset_o: float

    def __post_init__(self):
        if not (self.gamma > 0):
            raise ValueError("gamma must be positive")
        if self.amplitude_a < 0 or self.offset_o < 0:
            raise ValueError("amplitude and offset must be non-negative")
        if not np.isfinite(self.delta_cr):
            raise ValueError("delta_cr must be finite")


@dataclass(frozen=True)
class Spectrum:
    """A sampled spectrum: frequency grid, count rates, uncertainties."""

    frequencies: np.ndarray
    counts: np.ndarray
    errors: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float)
        c = np.asarray(self.counts, dtype=float)
        e = np.asarray(self.errors, dtype=float)
        if f.ndim != 1 or f.size == 0:
            raise ValueError("frequency grid must be a non-empty 1-D array")
        if c.shape != f.shape or e.shape != f.shape:
            raise ValueError("counts and errors must match the grid shape")
        if not np.all(np.diff(f) > 0):
            raise ValueError("frequency grid must be strictly increasing")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(c)) and np.all(np.isfinite(e))):
            raise ValueError("spectrum arrays must be finite")
        if np.any(c < 0):
            raise ValueError("counts must be non-negative")
        if np.any(e <= 0):
            raise ValueError("errors must be positive")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "errors", e)


def lorentzian_comb(
    grid: np.ndarray,
    line_frequencies: np.ndarray,
    line_weights: np.ndarray,
    params: SpectrumModelParams,
) -> np.ndarray:
    """Model count rate on grid for lines at delta_cr + line_frequencies."""
    grid = np.asarray(grid, dtype=float)
    rate = np.full(grid.shape, params.offset_o, dtype=float)
    if line_frequencies.size == 0:
        return rate
    centers = params.delta_cr + line_frequencies
    amp_mhz = params.amplitude_a * 1e3  # GHz/s -> MHz/s to match gamma in MHz
    detune = grid[:, None] - centers[None, :]
    rate += amp_mhz * np.sum(
        params.gamma * line_weights[None, :] / (4.0 * detune**2 + params.gamma**2),
        axis=1,
    )
    return rate


def simulate_spectrum(
    catalog: list[TransitionLine],
    params: SpectrumModelParams,
    grid: np.ndarray,
) -> Spectrum:
    """Noise-free composite spectrum of a catalogue on a frequency grid.

    Errors are Poisson-style sqrt(counts) with a floor of one count, so
    the result can be fed straight into the weighted fitting routines.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a non-empty 1-D array")
    if not np.all(np.diff(grid) > 0):
        raise ValueError("grid must be strictly increasing")
    freqs = np.array([ln.frequency for ln in catalog], dtype=float)
    weights = np.array([ln.weight for ln in catalog], dtype=float)
    counts = lorentzian_comb(grid, freqs, weights, params)
    errors = np.sqrt(np.maximum(counts, 1.0))
    return Spectrum(frequencies=grid, counts=counts, errors=errors)


def _refined_peak_frequency(spectrum: Spectrum) -> float:
    """Position of the highest peak, parabola-refined between samples.

    Raises NoPeakError when the maximum does not stand out from the
    median by more than three robust standard deviations.
    """
    counts = spectrum.counts
    freqs = spectrum.frequencies
    i = int(np.argmax(counts))
    baseline = float(np.median(counts))
    robust_sigma = 1.4826 * float(np.median(np.abs(counts - baseline)))
    if not counts[i] > baseline + 3.0 * robust_sigma:
        raise NoPeakError("spectrum has no peak above the noise floor")
    if i == 0 or i == counts.size - 1:
        return float(freqs[i])
    # vertex of the parabola through the three points around the maximum
    x0, x1, x2 = freqs[i - 1], freqs[i], freqs[i + 1]
    y0, y1, y2 = counts[i - 1], counts[i], counts[i + 1]
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
    b = (x2**2 * (y0 - y1) + x1**2 * (y2 - y0) + x0**2 * (y1 - y2)) / denom
    if a >= 0:
        return float(x1)
    return float(-b / (2 * a))


def peak_splitting(spectrum_plus: Spectrum, spectrum_minus: Spectrum) -> float:
    """Separation in MHz between the dominant peaks of the two polarisations.

    Both spectra must share one frequency grid.  Raises NoPeakError when
    either spectrum is flat.
    """
    if not np.array_equal(spectrum_plus.frequencies, spectrum_minus.frequencies):
        raise ValueError("spectra must share the same frequency grid")
    f_plus = _refined_peak_frequency(spectrum_plus)
    f_minus = _refined_peak_frequency(spectrum_minus)
    return float(abs(f_plus - f_minus))
