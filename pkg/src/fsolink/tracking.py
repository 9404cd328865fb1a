"""Beam-spot localization on the detector array.

Two estimators: a channel-aided maximum-likelihood fit of the arrival angles
from the averaged on-slot outputs, and a blind argmax over the slot-averaged
array outputs that reports the angular interval of the winning cell.  The
blind method only localizes to a cell: a point estimate would need the
channel coefficients, which the blind pipeline does not have.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .channel import ArrayGeometry, array_response
from .signal import FrameObservation, NoiseModel


@dataclass(frozen=True)
class TrackReport:
    """Cell decision plus the implied arrival-angle intervals (1-based cell
    indices; intervals are the active-area bounds divided by the focal
    length).  ``boundary`` flags a beam center resolved from dead space or
    from outside the array, which only a truth-aware caller can know."""

    cell_i: int
    cell_j: int
    theta_x_interval: tuple[float, float]
    theta_y_interval: tuple[float, float]
    method: str                      # "ideal_ml" or "argmax"
    boundary: bool = False


def cell_angle_intervals(geo: ArrayGeometry):
    """Arrival-angle interval of each cell's active area, (na, 2) per axis."""
    lo, hi = geo.cell_edges()
    return np.stack([lo, hi], axis=1) / geo.focal_length_fc


def locate_beam_cell(theta_x: float, theta_y: float,
                     geo: ArrayGeometry) -> tuple[int, int, bool]:
    """Cell containing the beam center, 1-based, nearest active cell if the
    center sits in dead space or off the array (then boundary=True)."""
    lo, hi = geo.cell_edges()

    def axis_cell(pos):
        inside = (pos > lo) & (pos < hi)
        idx = int(np.argmax(inside))
        if inside.any():
            return idx, False
        centers = 0.5 * (lo + hi)
        return int(np.argmin(np.abs(centers - pos))), True

    i, bx = axis_cell(geo.focal_length_fc * theta_x)
    j, by = axis_cell(geo.focal_length_fc * theta_y)
    return i + 1, j + 1, bx or by


def _report(i0: int, j0: int, geo: ArrayGeometry, method: str,
            boundary: bool = False) -> TrackReport:
    iv = cell_angle_intervals(geo)
    return TrackReport(cell_i=i0 + 1, cell_j=j0 + 1,
                       theta_x_interval=(float(iv[i0, 0]), float(iv[i0, 1])),
                       theta_y_interval=(float(iv[j0, 0]), float(iv[j0, 1])),
                       method=method, boundary=boundary)


def mean_slot_outputs(frame: FrameObservation) -> np.ndarray:
    """Per-detector average of the outputs over the whole window."""
    return frame.currents.mean(axis=0)


def argmax_track(frame: FrameObservation, geo: ArrayGeometry) -> TrackReport:
    """Blind cell decision: the detector with the largest slot-averaged
    output wins; ties break toward the smallest (i, j)."""
    r_s = mean_slot_outputs(frame)
    flat = int(np.argmax(r_s))  # argmax returns the first (lexicographic) max
    i0, j0 = divmod(flat, geo.na)
    return _report(i0, j0, geo, "argmax")


def ideal_track_objective(theta_x, theta_y, r_on: np.ndarray, m: int,
                          h1: float, geo: ArrayGeometry,
                          nm: NoiseModel) -> float:
    """Negative-log-likelihood objective of the averaged on-slot outputs at
    hypothesized arrival angles (scaled by 2/m, constants dropped)."""
    h = h1 * array_response(float(theta_x), float(theta_y), geo)
    var = nm.sigma_s2 * h + nm.sigma_0_2
    return float((np.log(var / m) / m + (r_on - nm.amp1 * h) ** 2 / var).sum())


def ideal_track(frame: FrameObservation, s: np.ndarray, h1: float,
                geo: ArrayGeometry, nm: NoiseModel):
    """Arrival-angle estimate by minimizing the averaged-output objective.

    Needs the transmitted pattern and the lens coefficient.  Multi-start
    Nelder-Mead (3 x 3 grid over the field-of-view box) guards against the
    local minima that appear when the spot straddles dead space.
    Returns (theta_x_hat, theta_y_hat).
    """
    s = np.asarray(s, dtype=float)
    m = int(round(s.sum()))
    if m < 1:
        raise ValueError("tracking needs at least one transmitted one")
    r_on = (frame.currents * s[:, None, None]).sum(axis=0) / m
    half = geo.na * geo.active_width_wa / (2.0 * geo.focal_length_fc)

    def obj(p):
        return ideal_track_objective(p[0], p[1], r_on, m, h1, geo, nm)

    best = None
    starts = np.linspace(-0.6 * half, 0.6 * half, 3)
    for sx in starts:
        for sy in starts:
            res = optimize.minimize(
                obj, x0=[sx, sy], method="Nelder-Mead",
                bounds=[(-half, half), (-half, half)],
                options={"fatol": 1e-8, "xatol": 1e-10, "maxiter": 400})
            if best is None or res.fun < best.fun:
                best = res
    return float(best.x[0]), float(best.x[1])
