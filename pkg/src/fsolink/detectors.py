"""CSI-aided data detection over the APD array and the matching analytic BER.

Three schemes live here: symbol-by-symbol maximum-likelihood detection with
full channel knowledge, equal-gain combining with an optimized threshold, and
maximal-ratio combining (mean-over-variance weights; a documented utility,
not an analyzed scheme).  Blind detection is in :mod:`fsolink.glrt`.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .channel import ChannelState
from .mathcore import q_function
from .signal import FrameObservation, NoiseModel


class DegenerateChannelError(ValueError):
    """Raised when a detector threshold is requested for a dead channel."""


class Scheme(str, enum.Enum):
    IDEAL_ML = "ideal_ml"
    EGC = "egc"
    MRC = "mrc"
    GLRT_EXHAUSTIVE = "glrt_exhaustive"
    GLRT_REDUCED = "glrt_reduced"


@dataclass(frozen=True)
class DetectionResult:
    bits_hat: np.ndarray         # (L,) int8
    scheme: Scheme
    aux: np.ndarray | None = None  # per-detector channel estimate, if any


# ---------------------------------------------------------------------------
# ideal maximum-likelihood detection
# ---------------------------------------------------------------------------

def ml_decision_terms(hflat: np.ndarray, nm: NoiseModel):
    """Per-detector coefficients of the ML decision rule for channel row(s)
    ``hflat`` (..., N).  Returns (a, b, rhs) such that the rule is

        sum_n a_n * r_n + b_n * r_n^2   vs   rhs   (decide 1 when larger)
    """
    s0 = nm.sigma_0_2
    v = nm.sigma_s2 * hflat + s0
    den = s0 * v
    a = 2.0 * s0 * nm.amp1 * hflat / den
    b = nm.sigma_s2 * hflat / den
    const = (nm.amp1 * hflat) ** 2 * s0 / den
    rhs = (np.log1p(nm.sigma_s2 * hflat / s0) + const).sum(axis=-1)
    return a, b, rhs


def ml_detect_batch(currents: np.ndarray, hflat: np.ndarray,
                    nm: NoiseModel) -> np.ndarray:
    """Vectorized ML decisions. ``currents``: (B, L, N), ``hflat``: (B, N)."""
    a, b, rhs = ml_decision_terms(hflat, nm)
    stat = (currents * a[:, None, :] + currents ** 2 * b[:, None, :]).sum(axis=2)
    return (stat > rhs[:, None]).astype(np.int8)


def ml_ideal_detect(frame: FrameObservation, ch: ChannelState,
                    nm: NoiseModel) -> DetectionResult:
    """Symbol-by-symbol ML detection with known per-detector coefficients.

    Equivalent to comparing the two Gaussian likelihood products per bit;
    exact ties decide 0.
    """
    hflat = ch.H.reshape(1, -1)
    r = frame.currents.reshape(1, frame.window_length, -1)
    bits = ml_detect_batch(r, hflat, nm)[0]
    return DetectionResult(bits_hat=bits, scheme=Scheme.IDEAL_ML)


def _ml_ber_pieces(hflat: np.ndarray, nm: NoiseModel):
    """Shared per-detector terms of the analytic ML error probabilities.

    Uses log1p forms that stay finite as h -> 0; dead detectors contribute
    the analytic limits of the printed expressions.
    """
    mu_e = nm.amp1
    s0 = nm.sigma_0_2
    h = np.asarray(hflat, dtype=float)
    x = nm.sigma_s2 * h / s0
    l1p = np.log1p(x)
    live = h > 0.0
    c10 = np.where(live, -s0 * np.divide(l1p, 2.0 * mu_e * h,
                                         out=np.zeros_like(h), where=live),
                   -nm.sigma_s2 / (2.0 * mu_e))
    c01 = np.where(live, (s0 * (1.0 + x)) * np.divide(l1p, 2.0 * mu_e * h,
                                                      out=np.zeros_like(h), where=live),
                   nm.sigma_s2 / (2.0 * mu_e))
    return mu_e, s0, c10, c01


def ml_conditional_ber(ch: ChannelState, nm: NoiseModel, *,
                       n2_moments: bool = True) -> float:
    """Analytic BER of the ideal ML detector conditioned on the channel.

    Approximates the decision statistic as Gaussian after linearizing the
    log-likelihood difference.  With ``n2_moments=True`` (default) the mean
    and variance of the quadratic noise term are retained, which is what
    actually tracks Monte Carlo results; ``n2_moments=False`` drops that
    term entirely (the textbook linearized form, documented to overestimate
    the error rate once shot noise is non-negligible).
    """
    h = ch.H.ravel()
    if not np.any(h > 0.0):
        return 0.5
    mu_e, s0, c10, c01 = _ml_ber_pieces(h, nm)
    n_det = h.size
    half_sig = mu_e * h / 2.0
    var1 = n_det * s0 + nm.sigma_s2 * h.sum()
    var0 = float(n_det) * s0
    if n2_moments:
        shift = nm.sigma_s2 / (2.0 * mu_e)
        extra = n_det * nm.sigma_s2 ** 2 / (2.0 * mu_e ** 2)
        num10 = (half_sig + c10 + shift).sum()
        num01 = (half_sig + c01 - shift).sum()
        p10 = q_function(num10 / np.sqrt(var1 + extra))
        p01 = q_function(num01 / np.sqrt(var0 + extra))
    else:
        p10 = q_function((half_sig + c10).sum() / np.sqrt(var1))
        p01 = q_function((half_sig + c01).sum() / np.sqrt(var0))
    return float(0.5 * (p10 + p01))


def ml_average_ber(link, geo, gg, nm: NoiseModel, n_draws: int,
                   rng: np.random.Generator, *, n2_moments: bool = True):
    """Monte Carlo average of the conditional ML BER over channel draws.

    Returns (mean, standard_error).  Realizes the fading/misalignment
    average of the conditional error rate by sampling.
    """
    from .channel import sample_channel_batch

    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    h1, tx, ty, H = sample_channel_batch(rng, link, geo, gg, n_draws)
    vals = np.empty(n_draws)
    for i in range(n_draws):
        state = ChannelState(h1=float(h1[i]), theta_x=float(tx[i]),
                             theta_y=float(ty[i]), H=H[i])
        vals[i] = ml_conditional_ber(state, nm, n2_moments=n2_moments)
    se = vals.std(ddof=1) / np.sqrt(n_draws) if n_draws > 1 else float("inf")
    return float(vals.mean()), float(se)


# ---------------------------------------------------------------------------
# equal-gain combining
# ---------------------------------------------------------------------------

def egc_combine(frame: FrameObservation) -> np.ndarray:
    """Total photo-current of the whole array per bit slot."""
    return frame.currents.sum(axis=(1, 2))


def _ook_threshold_vec(m1, var0, var1):
    """Vectorized threshold minimizing the average of the two Gaussian tail
    errors for an on-off statistic with mean 0/m1 and variance var0/var1.

    The closed form cancels catastrophically when var1 - var0 is tiny next
    to var0, so that regime switches to its series expansion around the
    midpoint.
    """
    m1 = np.asarray(m1, dtype=float)
    var0 = np.asarray(var0, dtype=float)
    var1 = np.asarray(var1, dtype=float)
    dv = var1 - var0
    small = dv < 1e-6 * var0
    dv_safe = np.where(small, 1.0, dv)
    with np.errstate(divide="ignore", invalid="ignore"):
        lg = np.log1p(dv / var0)
        closed = (-m1 * var0 + np.sqrt(var0 * var1)
                  * np.sqrt(m1 ** 2 + dv_safe * lg)) / dv_safe
    series = 0.5 * m1 - m1 * dv / (8.0 * var0) + dv / (2.0 * m1)
    return np.where(small, series, closed)


def optimal_ook_threshold(m1: float, var0: float, var1: float) -> float:
    """Threshold minimizing the average of the two Gaussian tail errors for
    an on-off statistic with mean 0/m1 and variance var0/var1."""
    if m1 <= 0.0:
        raise DegenerateChannelError("on-bit mean must be positive")
    return float(_ook_threshold_vec(m1, var0, var1))


def egc_threshold(h_t: float, nm: NoiseModel, na: int) -> float:
    """Optimal decision threshold on the combined current for an na x na
    array with total channel coefficient h_t."""
    if h_t <= 0.0:
        raise DegenerateChannelError("total channel coefficient is zero")
    n_det = na * na
    var0 = n_det * nm.sigma_0_2
    return optimal_ook_threshold(nm.amp1 * h_t, var0, var0 + nm.sigma_s2 * h_t)


def egc_detect(frame: FrameObservation, h_t: float, nm: NoiseModel) -> DetectionResult:
    """Threshold detection on the summed array output (channel total known)."""
    na = frame.currents.shape[1]
    thr = egc_threshold(h_t, nm, na)
    bits = (egc_combine(frame) > thr).astype(np.int8)
    return DetectionResult(bits_hat=bits, scheme=Scheme.EGC)


def egc_conditional_ber(h_t: float, nm: NoiseModel, na: int,
                        threshold: float | None = None) -> float:
    """Exact BER of threshold detection on the combined current."""
    n_det = na * na
    var0 = n_det * nm.sigma_0_2
    if h_t <= 0.0:
        if threshold in (None, 0.0):
            return 0.5
        return float(0.5 * q_function(-threshold / np.sqrt(var0))
                     + 0.5 * q_function(threshold / np.sqrt(var0)))
    if threshold is None:
        threshold = egc_threshold(h_t, nm, na)
    m1 = nm.amp1 * h_t
    var1 = var0 + nm.sigma_s2 * h_t
    p10 = q_function((m1 - threshold) / np.sqrt(var1))
    p01 = q_function(threshold / np.sqrt(var0))
    return float(0.5 * (p10 + p01))


def egc_detect_batch(currents: np.ndarray, h_t: np.ndarray,
                     nm: NoiseModel) -> np.ndarray:
    """Vectorized EGC decisions. ``currents``: (B, L, N); ``h_t``: (B,)."""
    n_det = currents.shape[2]
    var0 = n_det * nm.sigma_0_2
    m1 = nm.amp1 * h_t
    dead = m1 <= 0.0
    m1s = np.where(dead, 1.0, m1)
    thr = _ook_threshold_vec(m1s, var0, var0 + nm.sigma_s2 * h_t)
    thr = np.where(dead, np.inf, thr)  # dead channel: never decide 1
    totals = currents.sum(axis=2)
    return (totals > thr[:, None]).astype(np.int8)


# ---------------------------------------------------------------------------
# maximal-ratio combining (utility scheme)
# ---------------------------------------------------------------------------

def mrc_weights(hflat: np.ndarray, nm: NoiseModel) -> np.ndarray:
    """Mean-over-variance combining weights at the on-bit hypothesis."""
    return nm.amp1 * hflat / (nm.sigma_s2 * hflat + nm.sigma_0_2)


def mrc_detect_batch(currents: np.ndarray, hflat: np.ndarray,
                     nm: NoiseModel) -> np.ndarray:
    """Vectorized MRC decisions. ``currents``: (B, L, N); ``hflat``: (B, N)."""
    w = mrc_weights(hflat, nm)
    m1 = (w * nm.amp1 * hflat).sum(axis=1)
    var0 = nm.sigma_0_2 * (w ** 2).sum(axis=1)
    var1 = (w ** 2 * (nm.sigma_s2 * hflat + nm.sigma_0_2)).sum(axis=1)
    dead = m1 <= 0.0
    thr = _ook_threshold_vec(np.where(dead, 1.0, m1),
                             np.where(dead, 1.0, var0),
                             np.where(dead, 2.0, var1))
    thr = np.where(dead, np.inf, thr)
    stat = (currents * w[:, None, :]).sum(axis=2)
    return (stat > thr[:, None]).astype(np.int8)


def mrc_detect(frame: FrameObservation, ch: ChannelState,
               nm: NoiseModel) -> DetectionResult:
    """Weighted combining with an optimized threshold on the combined
    statistic.  With equal weights this reduces exactly to EGC."""
    hflat = ch.H.reshape(1, -1)
    r = frame.currents.reshape(1, frame.window_length, -1)
    bits = mrc_detect_batch(r, hflat, nm)[0]
    return DetectionResult(bits_hat=bits, scheme=Scheme.MRC)
