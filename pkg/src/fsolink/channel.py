"""Optical channel between the ground transmitter and the detector array.

The end-to-end coefficient splits into a lens part h1 (geometric spread with
pointing error, atmospheric attenuation, turbulence fading) and an array part
h2[i,j] (fraction of the focused spot collected by each photodiode's active
area).  A channel realization bundles h1, the arrival angles, and the full
per-detector matrix H = h1 * h2.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .mathcore import GammaGammaParams, QuadratureError, q_function, sample_gamma_gamma


@dataclass(frozen=True)
class LinkGeometry:
    """Geometry of the uplink path and the transmit/receive optics.

    Exactly one of ``tx_beam_waist_w0`` and ``divergence_theta_div`` must be
    given; the former uses the diffraction spread of a Gaussian beam, the
    latter the simple cone approximation w_z = theta_div * Z.
    """

    altitude_diff: float                 # m, satellite minus ground altitude
    zenith_angle_xi: float               # rad
    wavelength: float                    # m
    rx_aperture_radius: float            # m
    tx_beam_waist_w0: float | None = None     # m
    divergence_theta_div: float | None = None  # rad
    scatter_coeff_zeta: float = 0.0      # 1/m, Beer-Lambert coefficient
    pointing_jitter_sigma_theta_e: float = 1e-6  # rad

    def __post_init__(self):
        if (self.tx_beam_waist_w0 is None) == (self.divergence_theta_div is None):
            raise ValueError("give exactly one of tx_beam_waist_w0 / divergence_theta_div")
        if self.altitude_diff <= 0 or self.wavelength <= 0 or self.rx_aperture_radius <= 0:
            raise ValueError("lengths must be positive")
        if self.scatter_coeff_zeta < 0 or self.pointing_jitter_sigma_theta_e < 0:
            raise ValueError("zeta and pointing jitter must be nonnegative")
        if not 0.0 <= self.zenith_angle_xi < np.pi / 2:
            raise ValueError("zenith angle must lie in [0, pi/2)")

    @property
    def propagation_length(self) -> float:
        """Slant range Z in meters."""
        return self.altitude_diff / np.cos(self.zenith_angle_xi)

    @property
    def aperture_area(self) -> float:
        """Effective receive aperture area in m^2."""
        return np.pi * self.rx_aperture_radius ** 2


@dataclass(frozen=True)
class ArrayGeometry:
    """Detector-array layout and the statistics of the focused spot."""

    na: int = 6                     # array is na x na
    active_width_wa: float = 250e-6  # m
    dead_space_wf: float = 5e-6      # m, junction width between cells
    focal_length_fc: float = 0.03    # m
    spot_sigma_I: float = 100e-6     # m, Gaussian spread of the focused spot
    aoa_jitter_sigma_x: float = 2e-3  # rad
    aoa_jitter_sigma_y: float = 2e-3  # rad

    def __post_init__(self):
        if self.na < 1:
            raise ValueError("na must be at least 1")
        if not 0.0 <= self.dead_space_wf < self.active_width_wa:
            raise ValueError("require 0 <= wf < wa")
        if self.focal_length_fc <= 0 or self.spot_sigma_I <= 0:
            raise ValueError("focal length and spot spread must be positive")
        if self.aoa_jitter_sigma_x < 0 or self.aoa_jitter_sigma_y < 0:
            raise ValueError("jitter sigmas must be nonnegative")

    def cell_edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Lower/upper focal-plane coordinates of each cell's active area.

        Index i runs 0..na-1; the array is centered on the optical axis and
        consecutive active areas are separated by the dead-space width.
        """
        i = np.arange(self.na, dtype=float)
        lo = (i - self.na / 2.0) * self.active_width_wa + self.dead_space_wf / 2.0
        hi = (i + 1.0 - self.na / 2.0) * self.active_width_wa - self.dead_space_wf / 2.0
        return lo, hi

    @property
    def fov_angle(self) -> float:
        """Field-of-view angle of the full array extent seen from the lens (rad)."""
        return np.arctan(self.na * self.active_width_wa / self.focal_length_fc)

    @property
    def fov_half_angle(self) -> float:
        """Angular half-extent of the array seen from the lens (rad)."""
        return np.arctan(self.na * self.active_width_wa / (2.0 * self.focal_length_fc))


@dataclass(frozen=True)
class ChannelState:
    """One channel realization: lens coefficient, arrival angles, and the
    na x na per-detector coefficient matrix H (every entry <= h1)."""

    h1: float
    theta_x: float
    theta_y: float
    H: np.ndarray

    @property
    def h_total(self) -> float:
        return float(self.H.sum())


def beam_width_at(Z: float, geo: LinkGeometry) -> float:
    """Beam radius at range Z, from the configured waist or divergence."""
    if Z < 0:
        raise ValueError("Z must be nonnegative")
    if geo.divergence_theta_div is not None:
        return geo.divergence_theta_div * Z
    w0 = geo.tx_beam_waist_w0
    return w0 * np.sqrt(1.0 + geo.wavelength * Z / (np.pi * w0 ** 2))


def pointing_displacement(theta_ex, theta_ey, Z: float):
    """Beam-center displacement at the receiver plane for small pointing
    errors along x and y."""
    return Z * np.sin(theta_ex), Z * np.sin(theta_ey)


def pointing_loss_approx(d_dx, d_dy, w_z: float, aperture_area: float):
    """Collected-power fraction for an aperture much smaller than the beam.

    Treats the beam as locally plane over the aperture, so the fraction is
    the local normalized intensity times the aperture area.
    """
    peak = 2.0 * aperture_area / (np.pi * w_z ** 2)
    return peak * np.exp(-2.0 * (np.asarray(d_dx) ** 2 + np.asarray(d_dy) ** 2) / w_z ** 2)


def pointing_loss_exact(d_dx: float, d_dy: float, w_z: float,
                        aperture_radius: float) -> float:
    """Collected-power fraction by direct integration of the Gaussian beam
    intensity over the circular aperture.

    Slow; retained as the oracle for the plane-wave approximation.
    """
    d = np.hypot(d_dx, d_dy)

    def integrand(phi, rho):
        x = d + rho * np.cos(phi)
        y = rho * np.sin(phi)
        return rho * np.exp(-2.0 * (x * x + y * y) / w_z ** 2)

    val, abserr = integrate.dblquad(integrand, 0.0, aperture_radius,
                                    0.0, 2.0 * np.pi, epsabs=0.0, epsrel=1e-6)
    if val > 0.0 and abserr > 1e-4 * val:
        raise QuadratureError("aperture integral did not converge")
    return 2.0 / (np.pi * w_z ** 2) * val


def atmospheric_loss(Z: float, zeta: float) -> float:
    """Beer-Lambert transmission over path length Z."""
    if Z < 0 or zeta < 0:
        raise ValueError("Z and zeta must be nonnegative")
    return float(np.exp(-Z * zeta))


def sample_aoa(rng: np.random.Generator, geo: ArrayGeometry, size=None):
    """Draw arrival-angle deviations (theta_x, theta_y) of the received beam.

    Independent zero-mean Gaussians with the configured jitter sigmas.
    """
    tx = rng.normal(0.0, geo.aoa_jitter_sigma_x, size=size)
    ty = rng.normal(0.0, geo.aoa_jitter_sigma_y, size=size)
    return tx, ty


def aoa_magnitude(theta_x, theta_y):
    """Total incidence angle relative to the receiver axis."""
    return np.hypot(theta_x, theta_y)


def fov_solid_angle(geo: ArrayGeometry) -> float:
    """Solid angle of the receiver field of view (sr).

    Rectangular-pyramid solid angle of the array extent seen through the
    lens.  Tends to 2*pi (a hemisphere) as the array grows without bound.
    """
    u = v = np.tan(geo.fov_angle) / 2.0
    ratio = (1.0 + u * u + v * v) / ((1.0 + u * u) * (1.0 + v * v))
    return 4.0 * np.arccos(np.sqrt(np.clip(ratio, 0.0, 1.0)))


def array_response(theta_x, theta_y, geo: ArrayGeometry) -> np.ndarray:
    """Fraction of the focused spot power falling on each active area.

    The spot is Gaussian with spread sigma_I centered at (fc*theta_x,
    fc*theta_y); the integral over each rectangular active cell separates
    into a product of two Gaussian-tail differences.  Entries lie in [0, 1]
    and sum to at most 1.  Accepts scalar angles (returns [na, na]) or
    length-B arrays (returns [B, na, na]).
    """
    tx = np.atleast_1d(np.asarray(theta_x, dtype=float))
    ty = np.atleast_1d(np.asarray(theta_y, dtype=float))
    lo, hi = geo.cell_edges()
    s = geo.spot_sigma_I
    cx = geo.focal_length_fc * tx[:, None]
    cy = geo.focal_length_fc * ty[:, None]
    dx = q_function((lo[None, :] - cx) / s) - q_function((hi[None, :] - cx) / s)
    dy = q_function((lo[None, :] - cy) / s) - q_function((hi[None, :] - cy) / s)
    h2 = dx[:, :, None] * dy[:, None, :]
    if np.isscalar(theta_x) or np.ndim(theta_x) == 0:
        return h2[0]
    return h2


def array_response_quadrature(theta_x: float, theta_y: float,
                              geo: ArrayGeometry, order: int = 80) -> np.ndarray:
    """Oracle for :func:`array_response`: Gauss-Legendre integration of the
    spot intensity over every active cell."""
    lo, hi = geo.cell_edges()
    nodes, weights = np.polynomial.legendre.leggauss(order)
    s = geo.spot_sigma_I

    def axis_masses(center):
        # integrate the 1-D Gaussian over each [lo, hi] cell
        mid = 0.5 * (lo + hi)
        halfw = 0.5 * (hi - lo)
        x = mid[:, None] + halfw[:, None] * nodes[None, :]
        pdf = np.exp(-0.5 * ((x - center) / s) ** 2) / (s * np.sqrt(2.0 * np.pi))
        return (pdf * weights[None, :]).sum(axis=1) * halfw

    mx = axis_masses(geo.focal_length_fc * theta_x)
    my = axis_masses(geo.focal_length_fc * theta_y)
    return mx[:, None] * my[None, :]


def sample_channel_batch(rng: np.random.Generator, link: LinkGeometry,
                         geo: ArrayGeometry, gg: GammaGammaParams | None,
                         n: int):
    """Draw ``n`` independent channel realizations.

    Returns (h1[n], theta_x[n], theta_y[n], H[n, na, na]).  ``gg=None``
    switches turbulence fading off (h_a identically 1).
    """
    Z = link.propagation_length
    w_z = beam_width_at(Z, link)
    te_x = rng.normal(0.0, link.pointing_jitter_sigma_theta_e, size=n)
    te_y = rng.normal(0.0, link.pointing_jitter_sigma_theta_e, size=n)
    d_dx, d_dy = pointing_displacement(te_x, te_y, Z)
    h_pu = pointing_loss_approx(d_dx, d_dy, w_z, link.aperture_area)
    h_l = atmospheric_loss(Z, link.scatter_coeff_zeta)
    if gg is None:
        h_a = np.ones(n)
    else:
        h_a = sample_gamma_gamma(rng, gg, size=n)
    h1 = h_pu * h_l * h_a
    tx, ty = sample_aoa(rng, geo, size=n)
    H = h1[:, None, None] * array_response(tx, ty, geo)
    return h1, tx, ty, H


def sample_channel(rng: np.random.Generator, link: LinkGeometry,
                   geo: ArrayGeometry, gg: GammaGammaParams | None) -> ChannelState:
    """Draw one channel realization."""
    h1, tx, ty, H = sample_channel_batch(rng, link, geo, gg, 1)
    return ChannelState(h1=float(h1[0]), theta_x=float(tx[0]),
                        theta_y=float(ty[0]), H=H[0])
