"""Blind joint channel-estimation and sequence detection over an observation
window, without pilots or channel knowledge.

For a hypothesized bit pattern the per-detector coefficient has a closed-form
estimate from the on-slot current sums; substituting it into the window
log-likelihood gives a per-pattern search metric.  The exhaustive detector
scores every nonzero pattern (Gray-ordered incremental sums); the reduced
detector scores only the L nested patterns that mark the top-m ranked slots
as ones.  The all-zero pattern carries no channel information and is
excluded; the simulation harness accounts for all-zero transmissions
separately.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._kernels import RANK_MAX, RANK_SUM
from .detectors import DetectionResult, Scheme
from .signal import FrameObservation, NoiseModel


class AllZeroSequenceError(ValueError):
    """Raised when a channel estimate is requested for a pattern with no
    ones; the estimator is undefined there."""


# Diagnostic count of closed-form estimates that had to be clamped at zero.
negative_estimate_clamps = 0


@dataclass(frozen=True)
class GlrtConfig:
    """Window length and search-mode settings of the blind detector.

    ``ranking`` chooses the reduced search's slot statistic: "sum" ranks by
    the summed array output per slot, "max" by the strongest single detector.
    "max" is much more robust on large arrays, where the plain sum drowns a
    small spot in the combined noise floor of many dark detectors.
    """

    window_L: int = 16
    mode: str = "reduced"            # "reduced" or "exhaustive"
    exhaustive_cap: int = 20
    ranking: str = "sum"

    def __post_init__(self):
        if self.window_L < 1:
            raise ValueError("window length must be >= 1")
        if self.mode not in ("reduced", "exhaustive"):
            raise ValueError("mode must be 'reduced' or 'exhaustive'")
        if self.ranking not in ("sum", "max"):
            raise ValueError("ranking must be 'sum' or 'max'")
        if self.mode == "exhaustive" and self.window_L > self.exhaustive_cap:
            raise ValueError(
                f"exhaustive search limited to L <= {self.exhaustive_cap}")

    @property
    def ranking_code(self) -> int:
        return RANK_MAX if self.ranking == "max" else RANK_SUM


def _as_2d(currents: np.ndarray) -> np.ndarray:
    r = np.asarray(currents, dtype=float)
    return r.reshape(r.shape[0], -1)


def estimate_channel_given_s(currents: np.ndarray, s: np.ndarray,
                             nm: NoiseModel) -> np.ndarray:
    """Closed-form per-detector coefficient estimates for a known pattern.

    ``currents`` is (L, na, na) (or (L, N)); returns estimates in the same
    detector layout.  Estimates are clamped at zero; clamp events increment
    ``negative_estimate_clamps``.
    """
    global negative_estimate_clamps
    s = np.asarray(s, dtype=float)
    m = int(round(s.sum()))
    if m < 1:
        raise AllZeroSequenceError(
            "cannot estimate the channel from a window with no ones")
    r = _as_2d(currents)
    A = s @ r
    B = (s * s) @ (r * r)  # s is 0/1 so s*s = s; kept explicit for clarity
    if nm.sigma_s2 > 0.0:
        t1 = nm.sigma_s2 / (2.0 * nm.amp1 ** 2)
        t2 = nm.sigma_0_2 / nm.sigma_s2
        R = (2.0 * nm.amp1 * nm.sigma_0_2 * A + nm.sigma_s2 * B) \
            / (m * nm.amp1 ** 2 * nm.sigma_s2)
        h = -t1 - t2 + np.sqrt(np.maximum(t1 * t1 + t2 * t2 + R, 0.0))
    else:
        h = A / (m * nm.amp1)
    negative_estimate_clamps += int((h < 0.0).sum())
    h = np.maximum(h, 0.0)
    return h.reshape(np.asarray(currents).shape[1:])


def glrt_metric(currents: np.ndarray, s: np.ndarray, nm: NoiseModel) -> float:
    """Search metric of pattern ``s``: twice the negative window
    log-likelihood at the estimated channel, without the constant term.

    Lower is better.  Requires at least one hypothesized one.
    """
    s = np.asarray(s, dtype=float)
    h = estimate_channel_given_s(currents, s, nm).ravel()
    r = _as_2d(currents)
    var = nm.sigma_s2 * h[None, :] * s[:, None] + nm.sigma_0_2
    dev = r - nm.amp1 * h[None, :] * s[:, None]
    return float((np.log(var) + dev * dev / var).sum())


def glrt_detect_batch(currents: np.ndarray, nm: NoiseModel,
                      cfg: GlrtConfig):
    """Decode a batch of windows. ``currents``: (F, L, N) or (F, L, na, na).

    Returns (bits, metrics) with bits of shape (F, L).
    """
    r3 = np.asarray(currents, dtype=float)
    r3 = r3.reshape(r3.shape[0], r3.shape[1], -1)
    if cfg.mode == "exhaustive":
        if r3.shape[1] > cfg.exhaustive_cap:
            raise ValueError(
                f"exhaustive search limited to L <= {cfg.exhaustive_cap}")
        return _kernels.exhaustive_batch(r3, nm.amp1, nm.sigma_s2, nm.sigma_0_2)
    return _kernels.reduced_batch(r3, cfg.ranking_code, nm.amp1,
                                  nm.sigma_s2, nm.sigma_0_2)


def _detect(frame: FrameObservation, nm: NoiseModel, cfg: GlrtConfig,
            mode: str) -> DetectionResult:
    run_cfg = GlrtConfig(window_L=frame.window_length, mode=mode,
                         exhaustive_cap=cfg.exhaustive_cap, ranking=cfg.ranking)
    r3 = frame.currents.reshape(1, frame.window_length, -1)
    bits, _ = glrt_detect_batch(r3, nm, run_cfg)
    h_hat = estimate_channel_given_s(frame.currents, bits[0], nm)
    scheme = Scheme.GLRT_EXHAUSTIVE if mode == "exhaustive" else Scheme.GLRT_REDUCED
    return DetectionResult(bits_hat=bits[0], scheme=scheme, aux=h_hat)


def glrt_detect_exhaustive(frame: FrameObservation, nm: NoiseModel,
                           cfg: GlrtConfig) -> DetectionResult:
    """Best nonzero pattern over all 2^L - 1 candidates.

    Exponential in L; refuses windows beyond the configured cap.  A window
    of one bit degenerates to always deciding that bit is a one, so the
    smallest useful window is two bits.
    """
    return _detect(frame, nm, cfg, "exhaustive")


def glrt_detect_reduced(frame: FrameObservation, nm: NoiseModel,
                        cfg: GlrtConfig) -> DetectionResult:
    """Best of the L nested top-m candidates under the configured slot
    ranking; polynomial in L."""
    return _detect(frame, nm, cfg, "reduced")
