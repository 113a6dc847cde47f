"""Spot detection, aperture spectra and the pooled-centre statistics."""

import numpy as np
import pytest

from vsic import synth
from vsic.detection import (
    DistributionStats,
    EmitterSpot,
    PleMapStack,
    count_histogram_modes,
    detect_spots,
    extract_spot_spectra,
    fit_spot_peaks,
    inhomogeneous_stats,
    lifetime_limited_linewidth_mhz,
    run_detection_pipeline,
)
from vsic.errors import InputError

CW = 5.0  # confocal width used throughout, px


def gaussian_image(shape, spots, *, background=10.0, noise=0.5, seed=0):
    """Background plus Gaussian spots of FWHM = CW at (row, col, amp)."""
    rows = np.arange(shape[0], dtype=float)[:, None]
    cols = np.arange(shape[1], dtype=float)[None, :]
    sigma = CW / 2.355
    image = np.full(shape, background, dtype=float)
    for r, c, amp in spots:
        image += amp * np.exp(-((rows - r) ** 2 + (cols - c) ** 2) / (2 * sigma**2))
    rng = np.random.default_rng(seed)
    return image + noise * rng.standard_normal(shape)


class TestDetectSpots:
    def test_single_spot_subpixel(self):
        image = gaussian_image((60, 60), [(20.3, 31.7, 200.0)])
        found = detect_spots(image, CW)
        assert found.centers.shape == (1, 2)
        assert abs(found.centers[0, 0] - 20.3) < 0.3
        assert abs(found.centers[0, 1] - 31.7) < 0.3
        assert found.snr[0] > 5.0

    def test_translation_equivariance(self):
        a = gaussian_image((60, 60), [(22.0, 25.0, 180.0)])
        b = gaussian_image((60, 60), [(29.0, 33.0, 180.0)])
        ca = detect_spots(a, CW).centers[0]
        cb = detect_spots(b, CW).centers[0]
        shift = cb - ca
        assert abs(shift[0] - 7.0) < 0.2
        assert abs(shift[1] - 8.0) < 0.2

    def test_affine_intensity_invariance(self):
        image = gaussian_image((70, 70), [(20.0, 20.0, 150.0), (50.0, 48.0, 90.0)])
        plain = detect_spots(image, CW)
        scaled = detect_spots(3.5 * image + 40.0, CW)
        assert scaled.centers.shape == plain.centers.shape
        assert np.allclose(scaled.centers, plain.centers, atol=1e-6)
        assert np.allclose(scaled.snr, plain.snr, rtol=1e-9)

    def test_close_pair_merges(self):
        image = gaussian_image((60, 60), [(30.0, 30.0, 200.0), (30.0, 31.5, 100.0)])
        found = detect_spots(image, CW)
        assert found.centers.shape[0] == 1
        # merged position leans toward the brighter spot
        assert abs(found.centers[0, 1] - 30.0) < 1.0

    def test_separated_pair_kept(self):
        image = gaussian_image((80, 80), [(20.0, 20.0, 200.0), (60.0, 60.0, 200.0)])
        found = detect_spots(image, CW)
        assert found.centers.shape[0] == 2

    def test_brighter_spot_has_larger_snr(self):
        image = gaussian_image((80, 80), [(20.0, 20.0, 60.0), (60.0, 60.0, 240.0)])
        found = detect_spots(image, CW)
        order = np.argsort(found.intensities)
        assert found.snr[order[0]] < found.snr[order[1]]
        assert np.all(found.snr > 0)

    def test_kernel_larger_than_image(self):
        image = np.ones((10, 10))
        with pytest.raises(InputError, match="larger than the image"):
            detect_spots(image, 20.0)

    def test_nonfinite_rejected(self):
        image = np.ones((20, 20))
        image[3, 3] = np.nan
        with pytest.raises(InputError, match="non-finite"):
            detect_spots(image, CW)

    def test_blank_image_yields_nothing(self):
        rng = np.random.default_rng(2)
        image = 10.0 + 0.5 * rng.standard_normal((50, 50))
        found = detect_spots(image, CW)
        assert found.centers.shape[0] == 0


class TestStackAndApertures:
    def make_stack(self, maps, detunings):
        return PleMapStack(
            maps=np.asarray(maps, dtype=float),
            detunings=np.asarray(detunings, dtype=float),
            pixel_size_um=0.1,
            confocal_width_px=CW,
        )

    def test_detunings_must_increase(self):
        maps = np.ones((3, 8, 8))
        with pytest.raises(ValueError, match="strictly increasing"):
            self.make_stack(maps, [0.0, 100.0, 100.0])

    def test_negative_counts_rejected(self):
        maps = np.ones((2, 8, 8))
        maps[0, 1, 1] = -1.0
        with pytest.raises(ValueError, match="non-negative"):
            self.make_stack(maps, [0.0, 50.0])

    def test_uniform_aperture_sum(self):
        values = np.array([3.0, 7.0, 11.0])
        maps = values[:, None, None] * np.ones((3, 30, 30))
        stack = self.make_stack(maps, [-100.0, 0.0, 100.0])
        spots = extract_spot_spectra(stack, np.array([[15.0, 15.0]]))
        spot = spots[0]
        # cw = 5 -> half width 2 -> 5x5 aperture
        assert np.allclose(spot.integrated_spectrum.counts, values * 25.0)
        assert np.array_equal(spot.integrated_spectrum.frequencies, stack.detunings)
        assert not spot.partial_aperture

    def test_partial_aperture_flag(self):
        maps = np.ones((2, 20, 20))
        stack = self.make_stack(maps, [0.0, 50.0])
        spots = extract_spot_spectra(stack, np.array([[0.0, 0.0], [10.0, 10.0]]))
        assert spots[0].partial_aperture
        assert not spots[1].partial_aperture

    def test_spectrum_tracks_resonance(self):
        detunings = np.arange(-400.0, 401.0, 50.0)
        maps = np.ones((detunings.size, 25, 25)) * 2.0
        profile = 100.0 * np.exp(-0.5 * ((detunings - 150.0) / 80.0) ** 2)
        rows = np.arange(25, dtype=float)[:, None]
        cols = np.arange(25, dtype=float)[None, :]
        psf = np.exp(-((rows - 12) ** 2 + (cols - 12) ** 2) / (2 * (CW / 2.355) ** 2))
        maps += profile[:, None, None] * psf[None, :, :]
        stack = self.make_stack(maps, detunings)
        spot = extract_spot_spectra(stack, np.array([[12.0, 12.0]]))[0]
        peak = stack.detunings[np.argmax(spot.integrated_spectrum.counts)]
        assert peak == 150.0
        fit_spot_peaks([spot], max_components=3)
        assert len(spot.peak_centers) == 1
        assert abs(spot.peak_centers[0] - 150.0) < 10.0


class TestDistribution:
    def test_lifetime_limited_linewidth(self):
        assert abs(lifetime_limited_linewidth_mhz(167.0) - 0.95309) < 1e-4
        with pytest.raises(InputError):
            lifetime_limited_linewidth_mhz(0.0)

    def test_eta_reference_value(self):
        rng = np.random.default_rng(11)
        z = rng.standard_normal(4000)
        centers = 230.0 + (z - z.mean()) / z.std() * 100.0
        stats = inhomogeneous_stats(centers, lifetime_ns=167.0)
        assert abs(stats.std - 100.0) < 1e-9
        assert abs(stats.eta - 105.0) < 1.0

    def test_single_center(self):
        stats = inhomogeneous_stats(np.array([123.0]))
        assert stats.std == 0.0
        assert stats.eta == 0.0
        assert stats.mean == 123.0

    def test_histogram_edges_aligned(self):
        centers = np.array([37.0, 260.0, -12.0])
        stats = inhomogeneous_stats(centers, bin_width_mhz=50.0)
        assert np.allclose(stats.bin_edges % 50.0, 0.0)
        shuffled = inhomogeneous_stats(centers[::-1], bin_width_mhz=50.0)
        assert np.array_equal(stats.bin_edges, shuffled.bin_edges)
        assert np.array_equal(stats.histogram, shuffled.histogram)
        assert int(np.sum(stats.histogram)) == 3

    def test_pooling_from_spots(self):
        def spot(centers):
            return EmitterSpot(
                center=np.zeros(2),
                integrated_spectrum=None,
                peak_centers=centers,
                snr=10.0,
                partial_aperture=False,
            )

        stats = inhomogeneous_stats([spot([100.0, 200.0]), spot([300.0])])
        assert sorted(stats.centers.tolist()) == [100.0, 200.0, 300.0]

    def test_empty_rejected(self):
        with pytest.raises(InputError, match="no peak centres"):
            inhomogeneous_stats(np.array([]))

    def test_mode_count_single_cluster(self):
        rng = np.random.default_rng(4)
        centers = 200.0 + 100.0 * rng.standard_normal(600)
        stats = inhomogeneous_stats(centers, bin_width_mhz=50.0)
        assert stats.n_modes == 1

    def test_mode_count_three_clusters(self):
        rng = np.random.default_rng(5)
        centers = np.concatenate(
            [
                -2000.0 + 150.0 * rng.standard_normal(300),
                200.0 + 150.0 * rng.standard_normal(250),
                2500.0 + 150.0 * rng.standard_normal(200),
            ]
        )
        stats = inhomogeneous_stats(centers, bin_width_mhz=50.0)
        assert stats.n_modes == 3

    def test_mode_count_empty_histogram(self):
        assert count_histogram_modes(np.zeros(10)) == 0


class TestPipeline:
    def test_small_stack_recall(self):
        stack, truth = synth.gen_emitter_stack(
            7, "enriched", n_emitters=8, shape=(60, 60)
        )
        result = run_detection_pipeline(stack)
        found = np.array([spot.center for spot in result.spots])
        matched = 0
        for r, c in zip(truth.rows, truth.cols):
            d = np.hypot(found[:, 0] - r, found[:, 1] - c)
            if d.min() <= stack.confocal_width_px:
                matched += 1
        assert matched >= 7  # at least 7 of 8 planted emitters
        # no spurious detections far from any planted emitter
        for row, col in found:
            d = np.hypot(truth.rows - row, truth.cols - col)
            assert d.min() <= stack.confocal_width_px

    def test_pipeline_pools_centers(self):
        stack, _ = synth.gen_emitter_stack(9, "enriched", n_emitters=5, shape=(50, 50))
        result = run_detection_pipeline(stack)
        pooled = [c for spot in result.spots for c in spot.peak_centers]
        assert sorted(result.pooled_centers.tolist()) == sorted(pooled)
        assert isinstance(result.stats, DistributionStats)
        assert result.stats.centers.size == len(pooled)
