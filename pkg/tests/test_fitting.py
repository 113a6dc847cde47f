"""Least-squares engine, model fits, mixture and global spectrum fits."""

import numpy as np
import pytest

from vsic import synth
from vsic.fitting import (
    FitError,
    FitProblem,
    LMConfig,
    NonPhysicalFitError,
    antibunching,
    exponential_decay,
    fit_exponential_decay,
    fit_gaussian_mixture,
    fit_lorentzian,
    fit_ple_global,
    levenberg_marquardt,
    lorentzian,
)
from vsic.fitting.lm import _jacobian
from vsic.transitions import Spectrum, field_catalog


class TestEngine:
    def test_straight_line_recovered_exactly(self):
        x = np.linspace(0.0, 10.0, 25)
        data = 3.0 + 2.5 * x
        problem = FitProblem(
            model=lambda p: p[0] + p[1] * x,
            data=data,
            initial=np.array([0.0, 1.0]),
        )
        result = levenberg_marquardt(problem)
        assert result.converged
        assert np.allclose(result.params, [3.0, 2.5], atol=1e-8)
        assert result.sse < 1e-14
        assert result.iterations <= 10

    def test_sse_never_increases(self):
        rng = np.random.default_rng(3)
        x = np.linspace(-2.0, 2.0, 40)
        data = np.exp(-x**2) + 0.05 * rng.standard_normal(x.shape)
        initial = np.array([0.3, 1.7])
        model = lambda p: p[0] * np.exp(-p[1] * x**2)
        problem = FitProblem(model=model, data=data, initial=initial)
        result = levenberg_marquardt(problem)
        r0 = data - model(initial)
        assert result.sse <= float(r0 @ r0)

    def test_jacobian_matches_analytic(self):
        x = np.linspace(-1.0, 3.0, 30)
        model = lambda p: p[0] + p[1] * x + p[2] * x**2
        p = np.array([0.7, -1.3, 2.1])
        jac = _jacobian(model, p, None, x.size, LMConfig())
        analytic = np.column_stack([np.ones_like(x), x, x**2])
        assert np.max(np.abs(jac - analytic)) < 1e-6

    def test_weights_pull_the_fit(self):
        x = np.array([0.0, 1.0, 2.0, 3.0])
        data = np.array([0.0, 0.0, 0.0, 10.0])
        heavy_last = np.array([1.0, 1.0, 1.0, 1e6])
        problem = FitProblem(
            model=lambda p: np.full(4, p[0]),
            data=data,
            initial=np.array([1.0]),
            weights=heavy_last,
        )
        result = levenberg_marquardt(problem)
        assert abs(result.params[0] - 10.0) < 0.01

    def test_nan_model_is_an_error_naming_the_point(self):
        x = np.linspace(0.0, 1.0, 10)

        def model(p):
            return np.full(10, np.nan)

        problem = FitProblem(model=model, data=x, initial=np.array([2.0]))
        with pytest.raises(FitError, match=r"parameters \[2\.0\]"):
            levenberg_marquardt(problem)

    def test_dead_parameter_flagged_via_pseudo_inverse(self):
        x = np.linspace(0.0, 5.0, 20)
        data = 2.0 * x
        problem = FitProblem(
            model=lambda p: p[0] * x + 0.0 * p[1],
            data=data,
            initial=np.array([1.0, 0.5]),
        )
        result = levenberg_marquardt(problem)
        assert abs(result.params[0] - 2.0) < 1e-6
        assert "pseudo-inverse" in result.message
        assert np.all(np.isfinite(result.covariance))

    def test_bounds_respected(self):
        x = np.linspace(0.0, 1.0, 15)
        data = 5.0 * np.ones(15)
        problem = FitProblem(
            model=lambda p: np.full(15, p[0]),
            data=data,
            initial=np.array([1.0]),
            bounds=(np.array([0.0]), np.array([2.0])),
        )
        result = levenberg_marquardt(problem)
        assert 0.0 <= result.params[0] <= 2.0
        assert abs(result.params[0] - 2.0) < 1e-9

    def test_iteration_cap(self):
        problem = FitProblem(
            model=lambda p: np.array([np.sin(p[0] * 50.0)]),
            data=np.array([2.0]),  # unreachable
            initial=np.array([0.3]),
        )
        result = levenberg_marquardt(problem, LMConfig(max_iterations=20))
        assert result.iterations <= 20

    def test_uncertainties_scale_inverse_sqrt_n(self):
        rng = np.random.default_rng(17)
        x = np.linspace(0.0, 4.0, 30)
        noise = rng.standard_normal(x.shape)
        data = 1.0 + 0.5 * x + 0.1 * noise

        def fit(rep):
            xs = np.tile(x, rep)
            ds = np.tile(data, rep)
            problem = FitProblem(
                model=lambda p: p[0] + p[1] * xs,
                data=ds,
                initial=np.array([0.0, 0.0]),
            )
            return levenberg_marquardt(problem)

        u1 = fit(1).uncertainties
        u4 = fit(4).uncertainties
        assert np.allclose(u4, u1 / 2.0, rtol=1e-6)


class TestModelFits:
    def test_lorentzian_recovery(self):
        x = np.linspace(-50.0, 50.0, 201)
        truth = (3.0, 12.0, 40.0, 5.0)  # center, fwhm, amplitude, offset
        rng = np.random.default_rng(8)
        y = lorentzian(x, *truth) + 0.2 * rng.standard_normal(x.shape)
        fit = fit_lorentzian(x, y, np.full(x.shape, 0.2))
        assert fit.converged
        assert fit.param_names == ["center", "fwhm", "amplitude", "offset"]
        for value, expected, sigma in zip(fit.params, truth, fit.uncertainties):
            assert abs(value - expected) < 5 * max(sigma, 1e-6)

    def test_lorentzian_noiseless_exact(self):
        x = np.linspace(-30.0, 30.0, 101)
        y = lorentzian(x, -2.0, 8.0, 20.0, 1.0)
        fit = fit_lorentzian(x, y)
        assert np.allclose(fit.params, [-2.0, 8.0, 20.0, 1.0], rtol=1e-6)

    def test_decay_recovery(self):
        t = np.linspace(0.0, 1.0, 120)
        y = exponential_decay(t, 4.0, 30.0, 0.15)
        rng = np.random.default_rng(21)
        noisy = y + 0.3 * rng.standard_normal(t.shape)
        fit = fit_exponential_decay(t, noisy, np.full(t.shape, 0.3))
        assert fit.converged
        assert fit.param_names == ["floor", "amplitude", "tau"]
        assert abs(fit.params[2] - 0.15) < 0.01

    def test_negative_time_constant_is_nonphysical(self):
        # drifting upward: the unconstrained optimum has tau < 0
        rng = np.random.default_rng(1)
        t = np.linspace(0.0, 1.0, 30)
        y = 3.0 + 0.02 * t + 0.05 * rng.standard_normal(t.shape)
        with pytest.raises(NonPhysicalFitError, match="not positive"):
            fit_exponential_decay(t, y)

    def test_antibunching_noiseless_exact(self):
        t = np.linspace(-0.3, 0.3, 151)
        y = antibunching(t, 0.828, 0.048)
        fit = fit_exponential_decay(t, y, variant="antibunching")
        assert fit.param_names == ["contrast", "t1"]
        assert np.allclose(fit.params, [0.828, 0.048], rtol=1e-6)

    def test_antibunching_from_generated_trace(self):
        times, values, errors = synth.gen_g2_trace(5, contrast=0.828, t1_us=0.048)
        fit = fit_exponential_decay(times, values, errors, variant="antibunching")
        assert fit.converged
        assert abs(fit.params[0] - 0.828) < 3 * fit.uncertainties[0] + 1e-9
        assert abs(fit.params[1] - 0.048) < 3 * fit.uncertainties[1] + 1e-9

    def test_unknown_variant(self):
        t = np.linspace(0.0, 1.0, 20)
        with pytest.raises(FitError):
            fit_exponential_decay(t, t, variant="sigmoid")


class TestGaussianMixture:
    def spectrum(self, counts, grid):
        return Spectrum(
            frequencies=grid,
            counts=counts,
            errors=np.sqrt(np.maximum(counts, 1.0)),
        )

    def test_single_peak(self):
        grid = np.linspace(-500.0, 500.0, 41)
        counts = 20.0 + 300.0 * np.exp(-0.5 * ((grid - 60.0) / 90.0) ** 2)
        components = fit_gaussian_mixture(self.spectrum(counts, grid), 3)
        assert len(components) == 1
        center, width, amp = components[0]
        assert abs(center - 60.0) < 2.0
        assert abs(width - 90.0) < 5.0
        assert abs(amp - 300.0) < 10.0

    def test_two_peaks(self):
        grid = np.linspace(-1000.0, 1000.0, 81)
        counts = (
            10.0
            + 200.0 * np.exp(-0.5 * ((grid + 400.0) / 80.0) ** 2)
            + 120.0 * np.exp(-0.5 * ((grid - 300.0) / 60.0) ** 2)
        )
        components = fit_gaussian_mixture(self.spectrum(counts, grid), 3)
        assert len(components) == 2
        centers = [c for c, _, _ in components]
        assert abs(centers[0] + 400.0) < 5.0
        assert abs(centers[1] - 300.0) < 5.0

    def test_flat_noise_yields_no_components(self):
        rng = np.random.default_rng(33)
        grid = np.linspace(0.0, 100.0, 50)
        counts = rng.poisson(40.0, size=grid.shape).astype(float)
        components = fit_gaussian_mixture(self.spectrum(counts, grid), 3)
        assert components == []


class TestGlobalPleFit:
    def make_dataset(self, seed=42):
        return synth.gen_three_field_dataset(seed, integration_s=45.0)

    def provider(self):
        from vsic.constants import default_kd_params

        ground, excited = default_kd_params()
        return lambda b, pol: field_catalog(ground, excited, b, pol)

    def test_parameter_order_and_recovery(self):
        dataset = self.make_dataset()
        result = fit_ple_global(dataset, self.provider())
        assert result.fit.converged
        assert result.fields == (0.0, 600.0, 1000.0)
        # layout [gamma, delta_cr, a..., o...]
        assert result.fit.params.size == 2 + 2 * 3
        assert result.gamma == result.fit.params[0]
        assert result.delta_cr == result.fit.params[1]
        assert abs(result.gamma - 1038.0) < 0.03 * 1038.0
        assert abs(result.delta_cr - 234425594.0) < 5.0
        for b, a_true, o_true in ((0.0, 22.6, 24.9), (600.0, 19.5, 23.4), (1000.0, 23.1, 27.6)):
            assert abs(result.amplitude(b) / a_true - 1.0) < 0.10
            assert abs(result.offset(b) / o_true - 1.0) < 0.10

    def test_insertion_order_irrelevant(self):
        dataset = self.make_dataset()
        shuffled = dict(reversed(list(dataset.items())))
        r1 = fit_ple_global(dataset, self.provider())
        r2 = fit_ple_global(shuffled, self.provider())
        assert np.array_equal(r1.fit.params, r2.fit.params)

    def test_scaling_one_field_touches_only_its_amplitude_and_offset(self):
        dataset = self.make_dataset()
        c = 3.0
        scaled = {}
        for (b, pol), spectrum in dataset.items():
            if b == 600.0:
                scaled[(b, pol)] = Spectrum(
                    frequencies=spectrum.frequencies,
                    counts=spectrum.counts * c,
                    errors=spectrum.errors * c,
                )
            else:
                scaled[(b, pol)] = spectrum
        r1 = fit_ple_global(dataset, self.provider())
        r2 = fit_ple_global(scaled, self.provider())
        assert abs(r2.gamma / r1.gamma - 1.0) < 1e-4
        assert abs(r2.delta_cr - r1.delta_cr) < 0.1
        assert abs(r2.amplitude(600.0) / (c * r1.amplitude(600.0)) - 1.0) < 1e-4
        assert abs(r2.offset(600.0) / (c * r1.offset(600.0)) - 1.0) < 1e-4
        for b in (0.0, 1000.0):
            assert abs(r2.amplitude(b) / r1.amplitude(b) - 1.0) < 1e-4
            assert abs(r2.offset(b) / r1.offset(b) - 1.0) < 1e-4

    def test_missing_polarization_rejected(self):
        dataset = self.make_dataset()
        del dataset[(600.0, "-")]
        with pytest.raises(FitError, match="600"):
            fit_ple_global(dataset, self.provider())

    def test_mismatched_grids_rejected(self):
        dataset = self.make_dataset()
        spectrum = dataset[(0.0, "+")]
        dataset[(0.0, "+")] = Spectrum(
            frequencies=spectrum.frequencies + 1.0,
            counts=spectrum.counts,
            errors=spectrum.errors,
        )
        with pytest.raises(FitError, match="grids"):
            fit_ple_global(dataset, self.provider())
