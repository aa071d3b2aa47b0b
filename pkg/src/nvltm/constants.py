"""Physical constants (SI) and NV/diamond reference values."""

from scipy import constants as _c

C_LIGHT = _c.c
H_PLANCK = _c.h

ZERO_FIELD_SPLITTING = 2.87e9  # Hz
GYROMAGNETIC_RATIO = 28.024e9  # Hz/T
TETRAHEDRAL_ANGLE_DEG = 109.5

PUMP_WAVELENGTH = 532e-9
SEED_WAVELENGTH = 710e-9


def photon_energy(wavelength):
    return H_PLANCK * C_LIGHT / wavelength
