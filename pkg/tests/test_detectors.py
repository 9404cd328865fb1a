"""Channel-aided detectors: exact rules against oracles, analytic BER against
Monte Carlo, and the scheme ordering."""
import dataclasses

import numpy as np
import pytest

from fsolink import channel as chn
from fsolink import detectors as det
from fsolink import signal as sig
from fsolink.config import ExperimentConfig, default_link
from fsolink.mathcore import q_function
from fsolink.sim import _golden_min


def make_state(h_matrix):
    h = np.asarray(h_matrix, dtype=float)
    return chn.ChannelState(h1=float(h.sum()), theta_x=0.0, theta_y=0.0, H=h)


def make_nm(pt=0.01, sigma_s2=None, sigma_0_2=None):
    nm = sig.noise_model(sig.ApdElectronics(tx_power_Pt=pt), 1e-9)
    return sig.NoiseModel(
        mu=nm.mu, tx_power_pt=pt,
        sigma_s2=nm.sigma_s2 if sigma_s2 is None else sigma_s2,
        sigma_0_2=nm.sigma_0_2 if sigma_0_2 is None else sigma_0_2)


def simulate(rng, bits, state, nm):
    return sig.simulate_frame(rng, np.asarray(bits, dtype=np.int8), state, nm)


def random_states(n, seed, pt):
    cfg = ExperimentConfig().with_axis_value("tx_power_dB", pt)
    rng = np.random.default_rng(seed)
    h1, tx, ty, H = chn.sample_channel_batch(rng, cfg.link, cfg.array,
                                             cfg.gg_params(), n)
    return [chn.ChannelState(h1=float(h1[i]), theta_x=float(tx[i]),
                             theta_y=float(ty[i]), H=H[i]) for i in range(n)]


class TestMlRule:
    def test_single_apd_threshold_reduction(self):
        nm = make_nm(sigma_s2=0.0)
        st = make_state([[1.0]])
        t = nm.amp1 / 2.0
        eps = 1e-9 * t
        for r, want in [(t + eps, 1), (t - eps, 0), (t, 0)]:
            fr = sig.FrameObservation(bits=np.array([0], dtype=np.int8),
                                      currents=np.array([[[r]]]))
            got = det.ml_ideal_detect(fr, st, nm).bits_hat[0]
            assert got == want

    def test_noiseless_frame_no_errors(self):
        nm = make_nm()
        near_zero = sig.NoiseModel(mu=nm.mu, tx_power_pt=nm.tx_power_pt,
                                   sigma_s2=0.0, sigma_0_2=1e-40)
        st = make_state([[6e-7, 1e-7], [0.0, 3e-7]])
        bits = np.array([1, 0, 1, 1, 0, 0, 1], dtype=np.int8)
        fr = simulate(np.random.default_rng(0), bits, st, near_zero)
        out = det.ml_ideal_detect(fr, st, nm)
        assert np.array_equal(out.bits_hat, bits)

    def test_identical_to_likelihood_comparison(self):
        # oracle: evaluate both Gaussian likelihood products directly
        nm = make_nm(pt=0.05)
        rng = np.random.default_rng(1)
        n_frames, L = 2500, 4
        states = random_states(n_frames, 11, 17.0)
        mism = 0
        for st in states:
            bits = rng.integers(0, 2, L).astype(np.int8)
            fr = simulate(rng, bits, st, nm)
            got = det.ml_ideal_detect(fr, st, nm).bits_hat
            h = st.H.ravel()
            r = fr.currents.reshape(L, -1)
            v1 = nm.sigma_s2 * h + nm.sigma_0_2
            ll1 = (-0.5 * np.log(2 * np.pi * v1)
                   - (r - nm.amp1 * h) ** 2 / (2 * v1)).sum(axis=1)
            ll0 = (-0.5 * np.log(2 * np.pi * nm.sigma_0_2)
                   - r ** 2 / (2 * nm.sigma_0_2)).sum(axis=1)
            want = (ll1 > ll0).astype(np.int8)
            mism += int((got != want).sum())
        assert mism == 0


class TestMlAnalyticBer:
    def test_dead_channel_is_half(self):
        nm = make_nm()
        assert det.ml_conditional_ber(make_state([[0.0, 0.0]]), nm) == 0.5

    def test_sigma_s_zero_single_apd_exact(self):
        nm = make_nm(sigma_s2=0.0)
        h = 4e-7
        st = make_state([[h]])
        want = float(q_function(nm.amp1 * h / (2 * np.sqrt(nm.sigma_0_2))))
        for flag in (True, False):
            got = det.ml_conditional_ber(st, nm, n2_moments=flag)
            assert got == pytest.approx(want, rel=1e-12)

    def test_matches_monte_carlo_when_moments_kept(self):
        # uniform illumination, error rate around 1e-2
        nm = make_nm(pt=0.028)
        st = make_state(np.full((6, 6), 2e-6 / 36))
        ana = det.ml_conditional_ber(st, nm)
        rng = np.random.default_rng(3)
        bits = rng.integers(0, 2, (6000, 200)).astype(np.int8)
        hf = np.broadcast_to(st.H.reshape(1, -1), (6000, 36))
        s = bits[:, :, None].astype(float)
        mean = nm.amp1 * hf[:, None, :] * s
        var = nm.sigma_s2 * hf[:, None, :] * s + nm.sigma_0_2
        r = mean + rng.standard_normal(mean.shape) * np.sqrt(var)
        mc = float((det.ml_detect_batch(r, hf, nm) != bits).mean())
        assert ana == pytest.approx(mc, rel=0.10)

    def test_average_ber_degenerate_channel(self):
        cfg = ExperimentConfig(turbulence_enabled=False)
        link = dataclasses.replace(cfg.link, pointing_jitter_sigma_theta_e=0.0)
        arr = dataclasses.replace(cfg.array, aoa_jitter_sigma_x=0.0,
                                  aoa_jitter_sigma_y=0.0)
        nm = make_nm(pt=0.02)
        mean, se = det.ml_average_ber(link, arr, None, nm, 10,
                                      np.random.default_rng(0))
        h1, tx, ty, H = chn.sample_channel_batch(np.random.default_rng(1),
                                                 link, arr, None, 1)
        st = chn.ChannelState(h1=float(h1[0]), theta_x=0.0, theta_y=0.0, H=H[0])
        assert mean == pytest.approx(det.ml_conditional_ber(st, nm), rel=1e-9)
        assert se == 0.0

    def test_average_ber_stderr_scaling(self):
        cfg = ExperimentConfig()
        nm = make_nm(pt=0.02)
        gg = cfg.gg_params()
        _, se_small = det.ml_average_ber(cfg.link, cfg.array, gg, nm, 400,
                                         np.random.default_rng(5))
        _, se_big = det.ml_average_ber(cfg.link, cfg.array, gg, nm, 6400,
                                       np.random.default_rng(5))
        assert se_big == pytest.approx(se_small / 4.0, rel=0.35)


class TestEgc:
    def test_combine_identity_and_linearity(self):
        fr = sig.FrameObservation(bits=np.array([0, 1], dtype=np.int8),
                                  currents=np.arange(8.0).reshape(2, 2, 2))
        tot = det.egc_combine(fr)
        assert tot[0] == 6.0 and tot[1] == 22.0
        fr2 = sig.FrameObservation(bits=fr.bits, currents=2 * fr.currents)
        assert np.allclose(det.egc_combine(fr2), 2 * tot)
        single = sig.FrameObservation(bits=np.array([1], dtype=np.int8),
                                      currents=np.array([[[3.25]]]))
        assert det.egc_combine(single)[0] == 3.25

    def test_combined_noise_moments(self):
        nm = make_nm(pt=0.05)
        st = make_state(np.full((3, 3), 2e-7))
        bits = np.ones(400_000, dtype=np.int8)
        fr = simulate(np.random.default_rng(4), bits, st, nm)
        tot = det.egc_combine(fr)
        want_var = 9 * nm.sigma_0_2 + nm.sigma_s2 * st.h_total
        assert tot.var() == pytest.approx(want_var, rel=0.02)
        assert tot.mean() == pytest.approx(nm.amp1 * st.h_total, rel=0.01)

    def test_threshold_limit_sigma_s_to_zero(self):
        h_t = 1e-6
        nm = make_nm(sigma_s2=0.0)
        assert det.egc_threshold(h_t, nm, 4) == pytest.approx(nm.amp1 * h_t / 2)
        tiny = make_nm(sigma_s2=1e-22)
        assert det.egc_threshold(h_t, tiny, 4) == \
            pytest.approx(nm.amp1 * h_t / 2, rel=1e-4)

    def test_threshold_is_argmin(self):
        # golden-section oracle over a parameter grid
        for h_t in (2e-7, 1e-6, 4e-6):
            for pt in (0.005, 0.02, 0.1):
                for na in (2, 6, 10):
                    nm = make_nm(pt=pt)
                    closed = det.egc_threshold(h_t, nm, na)
                    num = _golden_min(
                        lambda t: det.egc_conditional_ber(h_t, nm, na, t),
                        0.0, nm.amp1 * h_t)
                    assert closed == pytest.approx(num, rel=1e-6)
                    assert closed > 0

    def test_threshold_unique_minimum_grid_scan(self):
        nm = make_nm(pt=0.02)
        h_t = 1.5e-6
        na = 6
        t_star = det.egc_threshold(h_t, nm, na)
        b_star = det.egc_conditional_ber(h_t, nm, na)
        grid = np.linspace(1e-9, nm.amp1 * h_t * 0.999, 2001)
        vals = np.array([det.egc_conditional_ber(h_t, nm, na, t) for t in grid])
        assert vals.min() >= b_star - 1e-15
        # best grid point sits next to the closed-form threshold
        assert abs(grid[vals.argmin()] - t_star) < 2 * (grid[1] - grid[0])

    def test_degenerate_channel(self):
        nm = make_nm()
        assert det.egc_conditional_ber(0.0, nm, 4) == 0.5
        with pytest.raises(det.DegenerateChannelError):
            det.egc_threshold(0.0, nm, 4)

    def test_noiseless_detection(self):
        nm = make_nm()
        near_zero = sig.NoiseModel(mu=nm.mu, tx_power_pt=nm.tx_power_pt,
                                   sigma_s2=0.0, sigma_0_2=1e-40)
        st = make_state([[4e-7, 1e-7], [2e-7, 0.0]])
        bits = np.array([1, 0, 0, 1, 1], dtype=np.int8)
        fr = simulate(np.random.default_rng(5), bits, st, near_zero)
        assert np.array_equal(det.egc_detect(fr, st.h_total, nm).bits_hat, bits)

    def test_decision_flip_symmetry(self):
        nm = make_nm(pt=0.02)
        st = make_state(np.full((2, 2), 4e-7))
        rng = np.random.default_rng(6)
        bits = rng.integers(0, 2, 64).astype(np.int8)
        fr = simulate(rng, bits, st, nm)
        thr = det.egc_threshold(st.h_total, nm, 2)
        dec = det.egc_detect(fr, st.h_total, nm).bits_hat
        # reflecting every total about the threshold flips every decision
        tot = det.egc_combine(fr)
        mirrored = 2 * thr - tot
        flipped = (mirrored > thr).astype(np.int8)
        strict = tot != thr
        assert np.array_equal(flipped[strict], 1 - dec[strict])

    def test_analytic_matches_monte_carlo(self):
        nm = make_nm(pt=0.05)
        h_t = 1.8e-6
        na = 6
        ana = det.egc_conditional_ber(h_t, nm, na)
        assert 1e-4 < ana < 1e-1
        rng = np.random.default_rng(7)
        n = 1_000_000
        bits = rng.integers(0, 2, n)
        var = na * na * nm.sigma_0_2 + nm.sigma_s2 * h_t * bits
        tot = nm.amp1 * h_t * bits + rng.standard_normal(n) * np.sqrt(var)
        thr = det.egc_threshold(h_t, nm, na)
        mc = float(((tot > thr).astype(int) != bits).mean())
        assert ana == pytest.approx(mc, rel=0.10)

    def test_never_better_than_ml_analytic(self):
        nm = make_nm(pt=0.04)
        for st in random_states(1000, 23, 16.0):
            ml = det.ml_conditional_ber(st, nm)
            egc = det.egc_conditional_ber(st.h_total, nm, st.H.shape[0])
            # near-dead channels park both at 1/2 within approximation noise
            assert egc >= ml - 1e-3


class TestMrc:
    def test_single_apd_equals_scalar_threshold(self):
        nm = make_nm(pt=0.02)
        st = make_state([[7e-7]])
        rng = np.random.default_rng(8)
        bits = rng.integers(0, 2, 500).astype(np.int8)
        fr = simulate(rng, bits, st, nm)
        got = det.mrc_detect(fr, st, nm).bits_hat
        want = det.egc_detect(fr, st.h_total, nm).bits_hat
        assert np.array_equal(got, want)

    def test_equal_coefficients_identical_to_egc(self):
        nm = make_nm(pt=0.02)
        st = make_state(np.full((4, 4), 1.2e-7))
        rng = np.random.default_rng(9)
        bits = rng.integers(0, 2, 5000).astype(np.int8)
        fr = simulate(rng, bits, st, nm)
        got = det.mrc_detect(fr, st, nm).bits_hat
        want = det.egc_detect(fr, st.h_total, nm).bits_hat
        assert np.array_equal(got, want)

    def test_ordering_ml_mrc_egc(self):
        # paired Monte Carlo at fixed channel states
        nm = make_nm(pt=0.05)
        rng = np.random.default_rng(10)
        errs = {"ml": 0, "mrc": 0, "egc": 0}
        tot = 0
        for st in random_states(60, 31, 17.0):
            if st.h_total <= 0:
                continue
            bits = rng.integers(0, 2, (40, 500)).astype(np.int8)
            hf = np.broadcast_to(st.H.reshape(1, -1), (40, st.H.size))
            s = bits[:, :, None].astype(float)
            mean = nm.amp1 * hf[:, None, :] * s
            var = nm.sigma_s2 * hf[:, None, :] * s + nm.sigma_0_2
            r = mean + rng.standard_normal(mean.shape) * np.sqrt(var)
            errs["ml"] += int((det.ml_detect_batch(r, hf, nm) != bits).sum())
            errs["mrc"] += int((det.mrc_detect_batch(r, hf, nm) != bits).sum())
            egc = det.egc_detect_batch(r, np.full(40, st.h_total), nm)
            errs["egc"] += int((egc != bits).sum())
            tot += bits.size
        assert tot >= 1_000_000
        slack = 3 * np.sqrt(errs["ml"] + errs["mrc"])
        assert errs["ml"] <= errs["mrc"] + slack
        slack = 3 * np.sqrt(errs["mrc"] + errs["egc"])
        assert errs["mrc"] <= errs["egc"] + slack
        # and the gaps are real, not just within slack
        assert errs["egc"] > errs["mrc"] > 0
