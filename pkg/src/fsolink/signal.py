"""APD photo-current model: responsivity, noise budget, and frame synthesis.

Convention used throughout the package: the transmitted symbol s[k] is the
dimensionless bit value, the transmit power is folded into the amplitude, so
the mean current of detector (i,j) on a "1" is mu * P_t * h_ij and the shot
variance is sigma_s^2 * h_ij * s[k] with sigma_s^2 = 2 e G F B mu P_t.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import constants

from .channel import ChannelState


@dataclass(frozen=True)
class ApdElectronics:
    """Receiver electronics and radiometric parameters."""

    gain_G: float = 100.0
    quantum_eta: float = 0.7
    excess_noise_F: float = 5.0          # typical InGaAs APD at G ~ 100
    bandwidth_B: float = 1e9             # Hz, 1 / bit time
    load_Rl: float = 1000.0              # ohm
    temperature_Tr: float = 300.0        # K
    optical_filter_Bo: float = 1e-3      # um
    spectral_radiance_Nb: float = 1e-4   # W / cm^2 / um / sr
    background_override_Pb: float | None = 1e-9  # W; None derives from geometry
    wavelength: float = 1550e-9          # m
    tx_power_Pt: float = 0.01            # W

    def __post_init__(self):
        if not 0.0 < self.quantum_eta <= 1.0:
            raise ValueError("quantum efficiency must lie in (0, 1]")
        if self.excess_noise_F < 1.0:
            raise ValueError("excess noise factor must be >= 1")
        for name in ("gain_G", "bandwidth_B", "load_Rl", "temperature_Tr",
                     "optical_filter_Bo", "spectral_radiance_Nb",
                     "wavelength", "tx_power_Pt"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class NoiseModel:
    """Derived signal/noise coefficients of the receiver.

    ``mu`` is the APD responsivity in A/W; ``sigma_s2`` multiplies
    h_ij * s[k] to give the shot variance; ``sigma_0_2`` is the constant
    floor (background plus thermal).  ``tx_power_pt`` is carried so the
    detection algebra can form the on-bit amplitude mu * P_t.
    """

    mu: float
    tx_power_pt: float
    sigma_s2: float
    sigma_0_2: float

    def __post_init__(self):
        if self.mu <= 0.0 or self.tx_power_pt <= 0.0:
            raise ValueError("mu and P_t must be positive")
        if self.sigma_s2 < 0.0 or self.sigma_0_2 <= 0.0:
            raise ValueError("need sigma_s2 >= 0 and sigma_0_2 > 0")

    @property
    def amp1(self) -> float:
        """Mean current per unit channel coefficient on a transmitted 1 (A)."""
        return self.mu * self.tx_power_pt


@dataclass(frozen=True)
class FrameObservation:
    """One observation window: L transmitted bits and the L x na x na
    photo-current tensor."""

    bits: np.ndarray      # (L,) int, values in {0, 1}
    currents: np.ndarray  # (L, na, na) float, amperes

    def __post_init__(self):
        if self.bits.ndim != 1 or len(self.bits) < 1:
            raise ValueError("bits must be a nonempty vector")
        if self.currents.shape[0] != len(self.bits) or self.currents.ndim != 3:
            raise ValueError("currents must be (L, na, na)")

    @property
    def window_length(self) -> int:
        return len(self.bits)


def responsivity_mu(e: ApdElectronics) -> float:
    """APD responsivity mu = e G eta / (h nu) in A/W."""
    nu = constants.c / e.wavelength
    return constants.e * e.gain_G * e.quantum_eta / (constants.h * nu)


def background_power(e: ApdElectronics, omega_fov: float,
                     lens_area_cm2: float) -> float:
    """Background optical power collected inside the field of view (W).

    Product of spectral radiance, optical filter bandwidth, FoV solid angle,
    and lens area (cm^2).  A configured override short-circuits the formula.
    """
    if omega_fov < 0 or lens_area_cm2 < 0:
        raise ValueError("solid angle and lens area must be nonnegative")
    if e.background_override_Pb is not None:
        return e.background_override_Pb
    return e.spectral_radiance_Nb * e.optical_filter_Bo * omega_fov * lens_area_cm2


def noise_model(e: ApdElectronics, P_b: float) -> NoiseModel:
    """Noise budget for given electronics and per-detector background power."""
    mu = responsivity_mu(e)
    sigma_b2 = 2.0 * constants.e * e.gain_G * e.excess_noise_F * mu * e.bandwidth_B * P_b
    sigma_th2 = 4.0 * constants.k * e.temperature_Tr * e.bandwidth_B / e.load_Rl
    sigma_s2 = (2.0 * constants.e * e.gain_G * e.excess_noise_F * e.bandwidth_B
                * mu * e.tx_power_Pt)
    return NoiseModel(mu=mu, tx_power_pt=e.tx_power_Pt, sigma_s2=sigma_s2,
                      sigma_0_2=sigma_b2 + sigma_th2)


def simulate_currents(rng: np.random.Generator, bits: np.ndarray,
                      H: np.ndarray, nm: NoiseModel) -> np.ndarray:
    """Photo-currents for a batch of frames.

    ``bits`` is (B, L) and ``H`` is (B, na, na); returns (B, L, na, na).
    Noise is independent across detectors and bit slots with variance
    sigma_s2 * h_ij * s[k] + sigma_0_2.
    """
    s = np.asarray(bits, dtype=float)[:, :, None, None]
    h = H[:, None, :, :]
    mean = nm.amp1 * h * s
    var = nm.sigma_s2 * h * s + nm.sigma_0_2
    return mean + rng.standard_normal(mean.shape) * np.sqrt(var)


def simulate_frame(rng: np.random.Generator, bits: np.ndarray,
                   ch: ChannelState, nm: NoiseModel) -> FrameObservation:
    """Photo-currents of one observation window over the given channel."""
    bits = np.asarray(bits)
    if bits.ndim != 1:
        raise ValueError("bits must be a vector")
    currents = simulate_currents(rng, bits[None, :], ch.H[None, :, :], nm)[0]
    return FrameObservation(bits=bits.astype(np.int8), currents=currents)
