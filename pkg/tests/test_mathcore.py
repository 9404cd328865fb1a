"""Special functions and turbulence statistics against independent numerics."""
import numpy as np
import pytest
from scipy import integrate, stats

from fsolink import mathcore as mc


def table1_profile(**kw):
    return mc.TurbulenceProfile(**kw)


class TestQFunction:
    def test_zero_is_half(self):
        assert mc.q_function(0.0) == 0.5

    def test_far_tail_saturates_nonnegative(self):
        v = mc.q_function(38.0)
        assert 0.0 <= v < 1e-300

    def test_value_against_tail_integral(self):
        # independent oracle: quadrature of the standard normal density
        want, _ = integrate.quad(
            lambda t: np.exp(-t * t / 2) / np.sqrt(2 * np.pi), 1.6449, 40.0)
        assert abs(want - 0.05) < 1e-4  # sanity: the known 5% quantile
        assert mc.q_function(1.6449) == pytest.approx(want, abs=1e-12)

    def test_symmetry_property(self):
        x = np.linspace(-9.5, 9.5, 401)
        err = np.abs(mc.q_function(x) + mc.q_function(-x) - 1.0)
        assert err.max() < 1e-12

    def test_strictly_decreasing(self):
        # beyond |x| ~ 7 the value saturates at 0 or 1 in double precision
        x = np.linspace(-7, 7, 2001)
        q = mc.q_function(x)
        assert np.all(np.diff(q) < 0)


class TestCn2Profile:
    def test_ground_value(self):
        prof = table1_profile()
        assert mc.cn2_at_altitude(0.0, prof) == pytest.approx(1e-13 + 2.7e-16)

    def test_decays_at_altitude(self):
        prof = table1_profile()
        assert mc.cn2_at_altitude(3e5, prof) < 1e-25

    def test_term_by_term_at_1km(self):
        # independent arithmetic, written out long-hand
        import math
        h = 1000.0
        t1 = 0.00594 * (21.0 / 27.0) ** 2 * (1e-5 * h) ** 10 * math.exp(-1.0)
        t2 = 2.7e-16 * math.exp(-h / 1500.0)
        t3 = 1e-13 * math.exp(-10.0)
        prof = table1_profile()
        assert mc.cn2_at_altitude(h, prof) == pytest.approx(t1 + t2 + t3, rel=1e-12)


class TestRytovVariance:
    def test_zero_turbulence_gives_zero(self):
        prof = table1_profile(cn2_ground=1e-40, wind_speed_V=1e-9,
                              hv_mid_coeff=0.0)
        assert mc.rytov_variance(prof, 1550e-9) < 1e-20

    def test_halving_path_decreases(self):
        cn2 = lambda h: 1e-15
        full = table1_profile()
        half = table1_profile(altitude_sat_Hs=200e3)
        s_full = mc.rytov_variance(full, 1550e-9, cn2_fn=cn2)
        s_half = mc.rytov_variance(half, 1550e-9, cn2_fn=cn2)
        assert s_half < s_full

    def test_against_riemann_sum(self):
        prof = table1_profile()
        lam = 1550e-9
        got = mc.rytov_variance(prof, lam)
        # brute-force oracle: fixed-step midpoint sum at 1e5 points
        h = np.linspace(0.0, 400e3, 100_001)
        hm = 0.5 * (h[1:] + h[:-1])
        u = hm / 400e3
        integ = (mc.cn2_at_altitude(hm, prof) * (1 - u) ** (5 / 6) * u ** (5 / 6))
        val = (integ * np.diff(h)).sum()
        k = 2 * np.pi / lam
        want = 2.25 * k ** (7 / 6) * (400e3) ** (5 / 6) \
            * (1 / np.cos(prof.zenith_angle_xi)) ** (11 / 6) * val
        assert got == pytest.approx(want, rel=1e-3)

    def test_monotone_in_ground_turbulence(self):
        vals = [mc.rytov_variance(table1_profile(cn2_ground=c), 1550e-9)
                for c in (1e-14, 1e-13, 5e-13)]
        assert vals[0] < vals[1] < vals[2]


class TestGammaGammaParams:
    def test_zero_rytov_raises(self):
        with pytest.raises(mc.DegenerateTurbulenceError):
            mc.gg_params_from_rytov(0.0)

    def test_small_rytov_diverges(self):
        p = mc.gg_params_from_rytov(1e-6)
        assert p.alpha > 1e4 and p.beta > 1e4

    def test_unit_rytov_closed_forms(self):
        p = mc.gg_params_from_rytov(1.0)
        alpha = 1.0 / (np.exp(0.49 / (1 + 1.11) ** (7 / 6)) - 1.0)
        beta = 1.0 / (np.exp(0.51 / (1 + 0.69) ** (5 / 6)) - 1.0)
        assert p.alpha == pytest.approx(alpha, rel=1e-12)
        assert p.beta == pytest.approx(beta, rel=1e-12)
        assert p.alpha > p.beta > 0

    def test_scintillation_index_matches_sample_variance(self):
        rng = np.random.default_rng(7)
        p = mc.gg_params_from_rytov(0.5)
        x = mc.sample_gamma_gamma(rng, p, size=1_000_000)
        assert x.var() == pytest.approx(p.scintillation_index, rel=0.02)


class TestGammaGammaSampling:
    def test_unit_mean(self):
        rng = np.random.default_rng(1)
        p = mc.GammaGammaParams(4.0, 2.0)
        x = mc.sample_gamma_gamma(rng, p, size=1_000_000)
        # oracle: first moment of the density by quadrature
        mean, _ = integrate.quad(lambda h: h * mc.gg_pdf(h, p), 0, 60, limit=200)
        assert mean == pytest.approx(1.0, abs=1e-4)
        assert x.mean() == pytest.approx(mean, rel=0.01)

    def test_positive_support(self):
        rng = np.random.default_rng(2)
        x = mc.sample_gamma_gamma(rng, mc.GammaGammaParams(2.0, 1.0), size=10000)
        assert np.all(x > 0)

    @pytest.mark.parametrize("alpha,beta", [(4.0, 2.0), (2.0, 1.0), (10.0, 8.0)])
    def test_ks_against_integrated_pdf(self, alpha, beta):
        rng = np.random.default_rng(int(alpha * 10 + beta))
        p = mc.GammaGammaParams(alpha, beta)
        x = mc.sample_gamma_gamma(rng, p, size=100_000)
        grid, cdf = mc.gg_cdf_grid(p, h_max=max(40.0, x.max() * 1.1), n=40001)
        stat = stats.kstest(x, lambda v: np.interp(v, grid, cdf)).statistic
        assert stat < 0.01


class TestGammaGammaPdf:
    def test_normalization(self):
        p = mc.GammaGammaParams(4.0, 2.0)
        total, _ = integrate.quad(lambda h: mc.gg_pdf(h, p), 0, 80, limit=200)
        assert total == pytest.approx(1.0, abs=1e-4)

    def test_nonnegative(self):
        p = mc.GammaGammaParams(2.0, 1.0)
        h = np.geomspace(1e-6, 50, 500)
        assert np.all(mc.gg_pdf(h, p) >= 0)

    def test_first_moment(self):
        p = mc.GammaGammaParams(10.0, 8.0)
        m1, _ = integrate.quad(lambda h: h * mc.gg_pdf(h, p), 0, 30, limit=200)
        assert m1 == pytest.approx(1.0, abs=1e-4)

    def test_domain_error(self):
        with pytest.raises(ValueError):
            mc.gg_pdf(-0.5, mc.GammaGammaParams(4.0, 2.0))
