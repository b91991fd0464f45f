import math

import numpy as np
import pytest
from scipy import integrate, stats

from otafl import moments
from otafl.core import PRACTICAL, UNBIASED, RngStream, SystemParams


def make_params(**kwargs):
    base = dict(num_devices=2, model_dim=4, sigma_h2=1.0, sigma_e2=0.02,
                sigma_w2=0.0, threshold_t=0.01, normalizer_mode=UNBIASED,
                base_seed=0)
    base.update(kwargs)
    return SystemParams(**base)


def gaussian_cos_moment(power: int, variance: float) -> float:
    """Quadrature oracle for E[cos(x)^power], x ~ N(0, variance)."""
    if variance == 0:
        return 1.0
    sd = math.sqrt(variance)

    def integrand(x):
        return math.cos(x) ** power * math.exp(-x * x / (2 * variance))

    value, _ = integrate.quad(integrand, -12 * sd, 12 * sd, limit=200)
    return value / math.sqrt(2 * math.pi * variance)


class TestAlphaRhoMoments:
    def test_zero_phase_noise(self):
        assert moments.alpha_rho_moments(6, 0.0) == (1.0, 0.0, 1.0, 0.0)

    def test_against_quadrature(self):
        # accumulated phase over d/2 increments has variance d*sigma_e2/2
        for d, sigma_e2 in ((2, 0.5), (4, 0.2), (10, 0.05)):
            variance = d * sigma_e2 / 2
            e_alpha, e_rho, e_alpha2, e_rho2 = moments.alpha_rho_moments(d, sigma_e2)
            assert math.isclose(e_alpha, gaussian_cos_moment(1, variance),
                                rel_tol=1e-10)
            assert math.isclose(e_alpha2, gaussian_cos_moment(2, variance),
                                rel_tol=1e-10)
            assert e_rho == 0.0
            assert math.isclose(e_alpha2 + e_rho2, 1.0, rel_tol=1e-15)

    def test_example_value(self):
        e_alpha = moments.alpha_rho_moments(2, 0.5)[0]
        assert math.isclose(e_alpha, math.exp(-0.25), rel_tol=1e-15)
        assert round(e_alpha, 5) == 0.77880

    def test_limit_half(self):
        _, _, e_alpha2, e_rho2 = moments.alpha_rho_moments(10_000, 0.5)
        assert math.isclose(e_alpha2, 0.5, abs_tol=1e-12)
        assert math.isclose(e_rho2, 0.5, abs_tol=1e-12)

    def test_rejects_odd_or_negative(self):
        with pytest.raises(ValueError):
            moments.alpha_rho_moments(3, 0.1)
        with pytest.raises(ValueError):
            moments.alpha_rho_moments(2, -0.1)


class TestClosedMean:
    def test_unbiased_is_plain_average(self):
        g = np.array([[2.0, 1.0, 5.0, -1.0], [4.0, 0.0, -3.0, 7.0]])
        params = make_params(sigma_e2=0.37, threshold_t=0.11)
        for d in range(4):
            assert moments.closed_mean(g, d, params) == g[:, d].mean()

    def test_practical_attenuation(self):
        g = np.zeros((2, 12))
        g[:, 10] = [2.0, 4.0]
        params = make_params(model_dim=12, normalizer_mode=PRACTICAL,
                             threshold_t=0.01, sigma_e2=0.02)
        expected = math.exp(-0.05) * 3.0  # ~ 2.85368
        assert math.isclose(moments.closed_mean(g, 10, params), expected,
                            rel_tol=1e-12)

    def test_practical_no_impairments(self):
        g = np.array([[1.0, 2.0], [3.0, 4.0]])
        params = make_params(model_dim=2, normalizer_mode=PRACTICAL,
                             sigma_e2=0.0, threshold_t=0.0)
        for d in range(2):
            assert moments.closed_mean(g, d, params) == g[:, d].mean()


class TestClosedVar:
    def test_thermal_only(self):
        g = np.array([[0.8, -0.3]])
        params = make_params(num_devices=1, model_dim=2, sigma_e2=0.0,
                             threshold_t=0.0, sigma_w2=0.02)
        assert math.isclose(moments.closed_var(g, 0, params), 0.01,
                            rel_tol=1e-15)

    def test_hand_value(self):
        g = np.zeros((1, 4))
        g[0, 2] = 1.0
        params = make_params(num_devices=1, model_dim=4, sigma_e2=0.5,
                             threshold_t=0.0, sigma_w2=0.0)
        expected = (math.exp(0.5) / 2) * (1 + math.exp(-1) - 2 * math.exp(-0.5))
        assert math.isclose(moments.closed_var(g, 2, params), expected,
                            rel_tol=1e-12)
        assert round(expected, 5) == 0.12763

    def test_hand_value_against_mc(self):
        g = np.zeros((1, 4))
        g[0, 2] = 1.0
        params = make_params(num_devices=1, model_dim=4, sigma_e2=0.5,
                             threshold_t=0.0, sigma_w2=0.0, base_seed=3)
        reports = moments.mc_moments(g, params, 1_000_000,
                                     RngStream(3, role=7))
        closed = moments.closed_var(g, 2, params)
        assert abs(reports[2].mc_var - closed) / closed < 0.02

    def test_thermal_ratio_grows_exponentially(self):
        g = np.zeros((3, 8))
        params = make_params(num_devices=3, model_dim=8, sigma_e2=0.13,
                             sigma_w2=1e-6)
        for d in (0, 2, 4):
            ratio = moments.closed_var(g, d + 2, params) \
                / moments.closed_var(g, d, params)
            assert math.isclose(ratio, math.exp(0.13), rel_tol=1e-12)

    def test_requires_unbiased_mode(self):
        params = make_params(normalizer_mode=PRACTICAL)
        with pytest.raises(ValueError):
            moments.closed_var(np.zeros((2, 4)), 0, params)


class TestMcMoments:
    def test_degenerate_channel_is_exact(self):
        g = RngStream(1, role=9).standard_normal((3, 6))
        params = make_params(num_devices=3, model_dim=6, sigma_e2=0.0,
                             sigma_w2=0.0, threshold_t=0.0)
        reports = moments.mc_moments(g, params, 2000, RngStream(1, role=7))
        for r in reports:
            assert r.mc_var == 0.0
            assert r.mc_mean == r.closed_mean

    def test_moments_match_closed_forms(self):
        params = make_params(num_devices=4, model_dim=8, sigma_e2=0.02,
                             sigma_w2=2e-8, threshold_t=0.01, base_seed=17)
        g = RngStream(17, role=9).standard_normal((4, 8))
        reports = moments.mc_moments(g, params, 50_000, RngStream(17, role=7))
        for r in reports:
            assert r.mean_ok(), f"mean off at d={r.d}"
            assert abs(r.mc_var - r.closed_var) / r.closed_var < 0.05

    def test_rejects_tiny_runs(self):
        with pytest.raises(ValueError):
            moments.mc_moments(np.zeros((2, 4)), make_params(), 10,
                               RngStream(0, role=7))

    def test_stderr_definition(self):
        params = make_params(base_seed=23)
        g = RngStream(23, role=9).standard_normal((2, 4))
        (r, *_rest) = moments.mc_moments(g, params, 5000, RngStream(23, role=7))
        assert math.isclose(r.mc_mean_stderr, math.sqrt(r.mc_var / 5000),
                            rel_tol=1e-12)


class TestVarianceBand:
    def test_small_runs_use_chi_square_band(self):
        lo, hi = moments.variance_band(1.0, 2000)
        df = 1999
        assert math.isclose(lo, stats.chi2.ppf(0.005, df) / df, rel_tol=1e-12)
        assert math.isclose(hi, stats.chi2.ppf(0.995, df) / df, rel_tol=1e-12)
        assert hi - 1.0 > 0.03

    def test_large_runs_use_relative_band(self):
        lo, hi = moments.variance_band(2.0, 200_000)
        assert math.isclose(lo, 2.0 * 0.97, rel_tol=1e-12)
        assert math.isclose(hi, 2.0 * 1.03, rel_tol=1e-12)


def test_verify_moments_reproducible():
    params = SystemParams(num_devices=4, model_dim=8, sigma_e2=0.02,
                          sigma_w2=2e-8, threshold_t=0.01,
                          normalizer_mode=UNBIASED, base_seed=77)
    first = moments.verify_moments(params, 5000)
    second = moments.verify_moments(params, 5000)
    assert [(r.mc_mean, r.mc_var) for r in first] \
        == [(r.mc_mean, r.mc_var) for r in second]
