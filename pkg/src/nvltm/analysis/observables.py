"""Amplification, magnetic contrast and shot-noise-limited sensitivity."""

import numpy as np

from ..constants import GYROMAGNETIC_RATIO, photon_energy
from ..errors import InvalidReferenceError

# shot-noise prefactor for a Lorentzian ODMR line, 4 / (3 sqrt 3)
LORENTZIAN_PREFACTOR = 4.0 / (3.0 * np.sqrt(3.0))


def amplification(a, a0):
    """Relative rise of the cavity amplitude over the unpumped reference."""
    if not a0 > 0:
        raise InvalidReferenceError(f"reference amplitude must be > 0, got {a0!r}")
    return (a - a0) / a0


def contrast(a, a_mag):
    """Relative drop of the amplitude when the field is applied."""
    if not a > 0:
        raise InvalidReferenceError(f"field-free amplitude must be > 0, got {a!r}")
    return (a - a_mag) / a


def photon_rate(detected_power, wavelength):
    return detected_power / photon_energy(wavelength)


def shot_noise_sensitivity(width_fwhm, contrast, detected_power, wavelength,
                           gyromagnetic_ratio=GYROMAGNETIC_RATIO):
    """Shot-noise-limited DC sensitivity in T/sqrt(Hz)."""
    for name, value in (("width_fwhm", width_fwhm), ("contrast", contrast),
                        ("detected_power", detected_power), ("wavelength", wavelength)):
        if not value > 0:
            raise ValueError(f"{name} must be > 0, got {value!r}")
    if contrast >= 1:
        raise ValueError("contrast must be < 1")
    rate = photon_rate(detected_power, wavelength)
    return (LORENTZIAN_PREFACTOR / gyromagnetic_ratio
            * width_fwhm / (contrast * np.sqrt(rate)))


def power_for_sensitivity(eta, width_fwhm, contrast, wavelength,
                          gyromagnetic_ratio=GYROMAGNETIC_RATIO):
    """Detected power at which ``shot_noise_sensitivity`` equals ``eta``."""
    rate = (LORENTZIAN_PREFACTOR / gyromagnetic_ratio * width_fwhm
            / (contrast * eta)) ** 2
    return rate * photon_energy(wavelength)
