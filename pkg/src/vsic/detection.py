"""Emitter detection on scanning-excitation map stacks.

A map stack holds one confocal intensity map per excitation detuning.
Spots are found on the maximum projection across detunings: the image
is smoothed with a Gaussian matched to the confocal resolution, local
maxima above a robust noise threshold are refined to sub-pixel
positions with a 3x3 quadratic fit, and centres closer than one spot
radius are merged.  Per-spot excitation spectra are then read out with
a fixed square aperture and decomposed into Gaussian peaks, and the
pooled peak centres give the inhomogeneous distribution of the sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .errors import InputError
from .fitting.lm import LMConfig
from .fitting.mixture import fit_gaussian_mixture
from .transitions import Spectrum

MAD_TO_SIGMA = 1.4826  # consistent scale factor for a normal distribution


@dataclass(frozen=True)
class PleMapStack:
    """Stack of intensity maps, one per excitation detuning.

    maps: array (n_maps, n_rows, n_cols), count rates per pixel.
    detunings: excitation detuning of each map, MHz, strictly increasing.
    pixel_size_um: pixel pitch in micrometres.
    confocal_width_px: FWHM of the confocal spot in pixels.
    """

    maps: np.ndarray
    detunings: np.ndarray
    pixel_size_um: float
    confocal_width_px: float

    def __post_init__(self):
        maps = np.asarray(self.maps, dtype=float)
        detunings = np.asarray(self.detunings, dtype=float)
        if maps.ndim != 3:
            raise ValueError("maps must have shape (n_maps, n_rows, n_cols)")
        if detunings.shape != (maps.shape[0],):
            raise ValueError("detunings must have one entry per map")
        if not np.all(np.diff(detunings) > 0):
            raise ValueError("detunings must be strictly increasing")
        if np.any(maps < 0):
            raise ValueError("map counts must be non-negative")
        if not (self.pixel_size_um > 0 and self.confocal_width_px > 0):
            raise ValueError("pixel size and confocal width must be positive")
        object.__setattr__(self, "maps", maps)
        object.__setattr__(self, "detunings", detunings)


@dataclass
class SpotDetections:
    """Detected spot centres with their peak values and significance.

    centers: (n, 2) sub-pixel (row, col) positions, sorted row-major.
    intensities: smoothed-image values at each peak.
    snr: peak excess over the background median in robust sigma units.
    """

    centers: np.ndarray
    intensities: np.ndarray
    snr: np.ndarray


def _local_maxima(image: np.ndarray) -> np.ndarray:
    """Boolean mask of pixels strictly greater than all 8 neighbours."""
    footprint = np.ones((3, 3), dtype=bool)
    footprint[1, 1] = False
    neighbour_max = ndimage.maximum_filter(image, footprint=footprint, mode="nearest")
    return image > neighbour_max


def _quadratic_refine(image: np.ndarray, row: int, col: int) -> tuple[float, float]:
    """Sub-pixel peak position from a quadratic fit to the 3x3 patch.

    Falls back to the integer position at image borders or when the fit
    does not describe a maximum within one pixel.
    """
    n_rows, n_cols = image.shape
    if row <= 0 or row >= n_rows - 1 or col <= 0 or col >= n_cols - 1:
        return float(row), float(col)
    patch = image[row - 1 : row + 2, col - 1 : col + 2]
    dy, dx = np.meshgrid([-1.0, 0.0, 1.0], [-1.0, 0.0, 1.0], indexing="ij")
    # z = a + b y + c x + d y^2 + e x^2 + f x y, least squares on 9 points
    design = np.column_stack(
        [np.ones(9), dy.ravel(), dx.ravel(), dy.ravel() ** 2, dx.ravel() ** 2, (dx * dy).ravel()]
    )
    coeff, *_ = np.linalg.lstsq(design, patch.ravel(), rcond=None)
    _, b, c, d, e, f = coeff
    hessian = np.array([[2 * d, f], [f, 2 * e]])
    det = np.linalg.det(hessian)
    if det <= 0 or hessian[0, 0] >= 0:
        return float(row), float(col)
    shift = np.linalg.solve(hessian, [-b, -c])
    if np.max(np.abs(shift)) > 1.0:
        return float(row), float(col)
    return float(row + shift[0]), float(col + shift[1])


def _merge_close(
    centers: list[np.ndarray], values: list[tuple], radius: float
) -> tuple[np.ndarray, list[tuple]]:
    """Merge centres within radius of each other to weighted means.

    Pairs exactly one radius apart still merge; the closest pair merges
    first so the result does not depend on input order.  values carries
    (intensity, snr) per centre; merged spots keep the summed intensity
    and the larger snr.
    """
    centers = [np.asarray(c, dtype=float) for c in centers]
    values = list(values)
    merged = True
    while merged and len(centers) > 1:
        merged = False
        best = None
        for i in range(len(centers)):
            for j in range(i + 1, len(centers)):
                dist = float(np.linalg.norm(centers[i] - centers[j]))
                if dist <= radius and (best is None or dist < best[0]):
                    best = (dist, i, j)
        if best is not None:
            _, i, j = best
            w_i, snr_i = values[i]
            w_j, snr_j = values[j]
            w = w_i + w_j
            centers[i] = (w_i * centers[i] + w_j * centers[j]) / w
            values[i] = (w, max(snr_i, snr_j))
            del centers[j], values[j]
            merged = True
    if not centers:
        return np.empty((0, 2)), []
    return np.array(centers), values


def detect_spots(
    image: np.ndarray,
    confocal_width_px: float,
    threshold_sigma: float = 5.0,
) -> SpotDetections:
    """Find emitter-like spots in a single intensity image.

    The image is smoothed with a Gaussian of sigma = confocal width /
    2.355, candidate maxima must exceed the smoothed-image median by
    threshold_sigma robust standard deviations (1.4826 * MAD), and
    surviving centres closer than half a confocal width are merged.
    Detection is invariant under affine intensity changes c * image + d
    with c > 0.
    """
    image = np.asarray(image, dtype=float)
    if image.ndim != 2 or min(image.shape) < 3:
        raise InputError("image must be 2-D with at least 3 pixels per axis")
    if not np.all(np.isfinite(image)):
        raise InputError("image contains non-finite values")
    if confocal_width_px <= 0:
        raise InputError("confocal width must be positive")
    if confocal_width_px > min(image.shape):
        raise InputError("smoothing kernel is larger than the image")

    smoothed = ndimage.gaussian_filter(image, sigma=confocal_width_px / 2.355, mode="nearest")
    median = float(np.median(smoothed))
    mad = float(np.median(np.abs(smoothed - median)))
    sigma = MAD_TO_SIGMA * mad
    threshold = median + threshold_sigma * sigma

    candidates = _local_maxima(smoothed) & (smoothed > threshold)
    rows, cols = np.nonzero(candidates)
    centers = []
    values = []
    for row, col in zip(rows, cols):
        centers.append(np.array(_quadratic_refine(smoothed, int(row), int(col))))
        peak = float(smoothed[row, col])
        snr = (peak - median) / sigma if sigma > 0 else np.inf
        values.append((peak, snr))

    merged_centers, merged_values = _merge_close(
        centers, values, radius=confocal_width_px / 2.0
    )
    if merged_centers.size == 0:
        return SpotDetections(
            centers=np.empty((0, 2)), intensities=np.empty(0), snr=np.empty(0)
        )
    order = np.lexsort((merged_centers[:, 1], merged_centers[:, 0]))
    return SpotDetections(
        centers=merged_centers[order],
        intensities=np.array([merged_values[i][0] for i in order]),
        snr=np.array([merged_values[i][1] for i in order]),
    )


@dataclass
class EmitterSpot:
    """One detected emitter with its aperture spectrum and fitted peaks.

    center: (row, col) sub-pixel position.
    integrated_spectrum: counts summed over the square aperture, one
        value per detuning.
    peak_centers: centres of the Gaussian mixture components, MHz.
    snr: detection significance in robust sigma units.
    partial_aperture: aperture clipped by the image edge.
    """

    center: np.ndarray
    integrated_spectrum: Spectrum
    peak_centers: list[float]
    snr: float
    partial_aperture: bool
    peaks: list[tuple[float, float, float]] = field(default_factory=list)


def extract_spot_spectra(
    stack: PleMapStack,
    centers: np.ndarray,
    snr: Optional[np.ndarray] = None,
) -> list[EmitterSpot]:
    """Integrate each map over a square aperture around every centre.

    The aperture is an odd pixel square of half-width floor(confocal
    width / 2) centred on the rounded spot position; spots whose
    aperture is clipped by the image edge are flagged partial.  Peak
    lists are left empty for fit_spot_peaks to fill.
    """
    n_maps, n_rows, n_cols = stack.maps.shape
    half = int(stack.confocal_width_px // 2)
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if snr is None:
        snr = np.full(centers.shape[0], np.nan)
    spots = []
    for center, spot_snr in zip(centers, snr):
        row = int(round(center[0]))
        col = int(round(center[1]))
        r0, r1 = row - half, row + half + 1
        c0, c1 = col - half, col + half + 1
        partial = r0 < 0 or c0 < 0 or r1 > n_rows or c1 > n_cols
        r0, c0 = max(r0, 0), max(c0, 0)
        r1, c1 = min(r1, n_rows), min(c1, n_cols)
        if r0 >= r1 or c0 >= c1:
            raise InputError(f"spot centre {center} lies outside the image")
        counts = stack.maps[:, r0:r1, c0:c1].sum(axis=(1, 2))
        errors = np.sqrt(np.maximum(counts, 1.0))
        spots.append(
            EmitterSpot(
                center=np.array([center[0], center[1]]),
                integrated_spectrum=Spectrum(
                    frequencies=stack.detunings, counts=counts, errors=errors
                ),
                peak_centers=[],
                snr=float(spot_snr),
                partial_aperture=bool(partial),
            )
        )
    return spots


def fit_spot_peaks(
    spots: Sequence[EmitterSpot],
    max_components: int = 3,
    *,
    config: Optional[LMConfig] = None,
) -> None:
    """Gaussian mixture decomposition of every spot spectrum, in place.

    Fills peaks and peak_centers on each spot; spots whose spectra
    cannot be fit keep empty lists rather than aborting the batch.
    """
    for spot in spots:
        try:
            components = fit_gaussian_mixture(
                spot.integrated_spectrum, max_components, config=config
            )
        except Exception:
            components = []
        spot.peaks = components
        spot.peak_centers = [center for center, _, _ in components]


@dataclass
class DistributionStats:
    """Pooled peak-centre distribution over all detected spots.

    eta is the ratio of the inhomogeneous spread (std) to the
    lifetime-limited linewidth 1/(2 pi tau).
    """

    centers: np.ndarray
    mean: float
    std: float
    bin_edges: np.ndarray
    histogram: np.ndarray
    eta: float
    n_modes: int


def lifetime_limited_linewidth_mhz(lifetime_ns: float) -> float:
    """Fourier-limited linewidth 1/(2 pi tau) in MHz."""
    if lifetime_ns <= 0:
        raise InputError("lifetime must be positive")
    return 1e3 / (2.0 * np.pi * lifetime_ns)


def count_histogram_modes(
    histogram: np.ndarray,
    *,
    smooth_sigma_bins: float = 4.0,
    rel_height: float = 0.25,
) -> int:
    """Number of well-separated maxima in a smoothed histogram."""
    if histogram.size == 0 or not np.any(histogram):
        return 0
    smoothed = ndimage.gaussian_filter1d(histogram.astype(float), smooth_sigma_bins)
    floor = rel_height * float(np.max(smoothed))
    padded = np.concatenate([[-np.inf], smoothed, [-np.inf]])
    inner = padded[1:-1]
    is_max = (inner > padded[:-2]) & (inner >= padded[2:]) & (inner > floor)
    return int(np.count_nonzero(is_max))


def inhomogeneous_stats(
    spots_or_centers,
    lifetime_ns: float = 167.0,
    bin_width_mhz: float = 50.0,
) -> DistributionStats:
    """Histogram and moments of pooled mixture-fit peak centres.

    Accepts a sequence of EmitterSpot (their peak_centers are pooled)
    or a flat array of centres.  Bin edges are aligned to integer
    multiples of the bin width so the histogram does not depend on
    sample order.  std is the population standard deviation; a single
    centre gives std = 0 and eta = 0.
    """
    if len(spots_or_centers) and isinstance(spots_or_centers[0], EmitterSpot):
        pooled = [c for spot in spots_or_centers for c in spot.peak_centers]
    else:
        pooled = list(np.asarray(spots_or_centers, dtype=float).ravel())
    centers = np.asarray(pooled, dtype=float)
    if centers.size == 0:
        raise InputError("no peak centres supplied")
    if bin_width_mhz <= 0:
        raise InputError("bin width must be positive")
    lo = np.floor(centers.min() / bin_width_mhz) * bin_width_mhz
    hi = np.ceil(centers.max() / bin_width_mhz) * bin_width_mhz
    if hi <= lo:
        hi = lo + bin_width_mhz
    edges = np.arange(lo, hi + bin_width_mhz / 2, bin_width_mhz)
    histogram, edges = np.histogram(centers, bins=edges)
    std = float(np.std(centers))
    return DistributionStats(
        centers=centers,
        mean=float(np.mean(centers)),
        std=std,
        bin_edges=edges,
        histogram=histogram,
        eta=std / lifetime_limited_linewidth_mhz(lifetime_ns),
        n_modes=count_histogram_modes(histogram),
    )


@dataclass
class DetectionResult:
    """Full pipeline output for one map stack."""

    spots: list[EmitterSpot]
    pooled_centers: np.ndarray
    stats: Optional[DistributionStats]
    params: dict = field(default_factory=dict)


def run_detection_pipeline(
    stack: PleMapStack,
    *,
    threshold_sigma: float = 5.0,
    max_components: int = 3,
    bin_width_mhz: float = 50.0,
    lifetime_ns: float = 167.0,
    fit_config: Optional[LMConfig] = None,
) -> DetectionResult:
    """Detect spots, extract and fit their spectra, pool the peak centres.

    Spot detection runs on the maximum projection of the stack across
    detunings, so emitters resonant anywhere in the scanned range stand
    out even when single maps are dominated by background.
    """
    projection = stack.maps.max(axis=0)
    detections = detect_spots(projection, stack.confocal_width_px, threshold_sigma)
    spots = extract_spot_spectra(stack, detections.centers, detections.snr)
    fit_spot_peaks(spots, max_components, config=fit_config)
    pooled = np.array(
        [center for spot in spots for center in spot.peak_centers], dtype=float
    )
    stats = (
        inhomogeneous_stats(pooled, lifetime_ns, bin_width_mhz) if pooled.size else None
    )
    return DetectionResult(
        spots=spots,
        pooled_centers=pooled,
        stats=stats,
        params={
            "threshold_sigma": threshold_sigma,
            "max_components": max_components,
            "bin_width_mhz": bin_width_mhz,
            "lifetime_ns": lifetime_ns,
        },
    )
