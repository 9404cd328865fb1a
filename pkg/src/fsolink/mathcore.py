"""Special functions, turbulence statistics, and random sampling shared by the
physics and detection modules.

Everything here is pure given an explicit ``numpy.random.Generator``; callers
that run in parallel must hand each worker its own stream.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, special


class DegenerateTurbulenceError(ValueError):
    """Raised when the scintillation strength is zero and the Gamma-Gamma
    shape parameters diverge; callers should switch fading off instead."""


class QuadratureError(RuntimeError):
    """Raised when an adaptive quadrature fails to converge."""


# Relative tolerance and evaluation cap for all adaptive quadratures in this
# module.  quad uses 21-point panels, so limit=2000 stays well under the cap.
QUAD_RTOL = 1e-6
QUAD_LIMIT = 2000


@dataclass(frozen=True)
class TurbulenceProfile:
    """Altitude profile inputs for the refractive-index structure parameter.

    ``hv_mid_coeff`` is the fixed mid-altitude coefficient of the
    Hufnagel-Valley model; it is exposed so tests can switch that term off.
    """

    wind_speed_V: float = 21.0          # m/s, high-altitude wind speed
    cn2_ground: float = 1e-13           # m^(-2/3), ground turbulence level
    altitude_ground_Hg: float = 0.0     # m
    altitude_sat_Hs: float = 400e3      # m
    zenith_angle_xi: float = np.deg2rad(30.0)  # rad
    hv_mid_coeff: float = 2.7e-16

    def __post_init__(self):
        if not self.altitude_sat_Hs > self.altitude_ground_Hg >= 0.0:
            raise ValueError("require Hs > Hg >= 0")
        if not 0.0 <= self.zenith_angle_xi < np.pi / 2:
            raise ValueError("zenith angle must lie in [0, pi/2)")
        if self.wind_speed_V <= 0.0 or self.cn2_ground <= 0.0:
            raise ValueError("wind speed and ground Cn^2 must be positive")


@dataclass(frozen=True)
class GammaGammaParams:
    """Shape parameters of the Gamma-Gamma irradiance distribution."""

    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha <= 0.0 or self.beta <= 0.0:
            raise ValueError("alpha and beta must be positive")

    @property
    def scintillation_index(self) -> float:
        """Variance of the unit-mean Gamma-Gamma variate."""
        return 1.0 / self.alpha + 1.0 / self.beta + 1.0 / (self.alpha * self.beta)


def q_function(x):
    """Gaussian tail probability Q(x) = P(N(0,1) > x).

    Evaluated through the complementary error function, which is accurate in
    the far tail and saturates at 0 once the result underflows double
    precision (x of about 38 and beyond).  Accepts scalars or arrays.
    """
    return 0.5 * special.erfc(np.asarray(x, dtype=float) / np.sqrt(2.0))


def cn2_at_altitude(h, profile: TurbulenceProfile):
    """Hufnagel-Valley refractive-index structure parameter at altitude h (m)."""
    h = np.asarray(h, dtype=float)
    term_wind = (0.00594 * (profile.wind_speed_V / 27.0) ** 2
                 * (1e-5 * h) ** 10 * np.exp(-h / 1000.0))
    term_mid = profile.hv_mid_coeff * np.exp(-h / 1500.0)
    term_ground = profile.cn2_ground * np.exp(-h / 100.0)
    return term_wind + term_mid + term_ground


def rytov_variance(profile: TurbulenceProfile, wavelength: float,
                   cn2_fn=None) -> float:
    """Rytov variance of the slant path from ground to satellite altitude.

    Integrates the structure-parameter profile between the two node
    altitudes with path-position weighting appropriate for nodes at
    different heights.  ``cn2_fn`` overrides the Hufnagel-Valley profile
    (used by tests that need a constant profile).
    """
    if wavelength <= 0.0:
        raise ValueError("wavelength must be positive")
    hg, hs = profile.altitude_ground_Hg, profile.altitude_sat_Hs
    dh = hs - hg
    if cn2_fn is None:
        cn2_fn = lambda h: cn2_at_altitude(h, profile)

    def integrand(h):
        u = (h - hg) / dh
        return cn2_fn(h) * (1.0 - u) ** (5.0 / 6.0) * u ** (5.0 / 6.0)

    val, abserr, info = integrate.quad(integrand, hg, hs, epsabs=0.0,
                                       epsrel=QUAD_RTOL, limit=QUAD_LIMIT,
                                       full_output=True)[:3]
    if val != 0.0 and abserr > 10.0 * QUAD_RTOL * abs(val):
        raise QuadratureError(
            f"slant-path integral did not converge (abserr={abserr:g})")
    k = 2.0 * np.pi / wavelength
    sec_xi = 1.0 / np.cos(profile.zenith_angle_xi)
    return 2.25 * k ** (7.0 / 6.0) * dh ** (5.0 / 6.0) * sec_xi ** (11.0 / 6.0) * val


def gg_params_from_rytov(sigma_R2: float) -> GammaGammaParams:
    """Gamma-Gamma shape parameters from the Rytov variance.

    Uses the standard plane-wave large-scale/small-scale expressions.  A zero
    Rytov variance makes both parameters diverge; callers should then disable
    fading (h_a identically 1) rather than sample a degenerate distribution.
    """
    if sigma_R2 < 0.0:
        raise ValueError("Rytov variance must be nonnegative")
    if sigma_R2 == 0.0:
        raise DegenerateTurbulenceError(
            "zero Rytov variance: Gamma-Gamma parameters diverge, "
            "use the fading-off mode instead")
    s65 = sigma_R2 ** (6.0 / 5.0)
    alpha = 1.0 / np.expm1(0.49 * sigma_R2 / (1.0 + 1.11 * s65) ** (7.0 / 6.0))
    beta = 1.0 / np.expm1(0.51 * sigma_R2 / (1.0 + 0.69 * s65) ** (5.0 / 6.0))
    return GammaGammaParams(alpha=alpha, beta=beta)


def sample_gamma_gamma(rng: np.random.Generator, p: GammaGammaParams, size=None):
    """Draw unit-mean Gamma-Gamma irradiance factors.

    Product of two independent unit-mean Gamma variates with shapes alpha
    and beta.
    """
    large = rng.gamma(shape=p.alpha, scale=1.0 / p.alpha, size=size)
    small = rng.gamma(shape=p.beta, scale=1.0 / p.beta, size=size)
    return large * small


def gg_pdf(h_a, p: GammaGammaParams):
    """Gamma-Gamma probability density at irradiance h_a > 0.

    Computed in log space with the exponentially scaled Bessel function so
    the far tail does not underflow.
    """
    h = np.asarray(h_a, dtype=float)
    if np.any(h <= 0.0):
        raise ValueError("Gamma-Gamma density is defined for h_a > 0 only")
    a, b = p.alpha, p.beta
    arg = 2.0 * np.sqrt(a * b * h)
    # kve = kv * exp(arg); undo the scaling inside the log.
    log_k = np.log(special.kve(a - b, arg)) - arg
    log_pdf = (np.log(2.0) + 0.5 * (a + b) * np.log(a * b)
               - special.gammaln(a) - special.gammaln(b)
               + (0.5 * (a + b) - 1.0) * np.log(h) + log_k)
    return np.exp(log_pdf)


def gg_cdf_grid(p: GammaGammaParams, h_max: float, n: int = 20001):
    """Numerically integrated Gamma-Gamma CDF on a uniform grid.

    Returns (grid, cdf).  Used as the distribution oracle for sampler tests.
    """
    grid = np.linspace(0.0, h_max, n)
    pdf = np.zeros_like(grid)
    pdf[1:] = gg_pdf(grid[1:], p)
    cdf = integrate.cumulative_trapezoid(pdf, grid, initial=0.0)
    return grid, cdf
