"""Symmetric two-mirror cavity with a Brewster-angled diamond plate.

Loss and gain are expressed per single pass (half round trip), the
convention in which the below-threshold finesse reads
``F = pi / (loss - gain)``.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .constants import C_LIGHT, SEED_WAVELENGTH
from .errors import AboveThresholdError, InvalidGeometryError, StabilityError

MIRROR_ABSORPTION = 20e-6
# Airy resonances are replaced by Lorentzians above this finesse
LORENTZIAN_FINESSE_THRESHOLD = 50.0


@dataclass(frozen=True)
class CavityGeometry:
    mirror_roc: float = 30e-3
    geometric_length: float = 12e-3
    mirror_reflectivity: float = 0.9998
    mirror_transmission: float = None
    diamond_thickness: float = 295e-6
    diamond_index: float = 2.41
    seed_wavelength: float = SEED_WAVELENGTH

    def __post_init__(self):
        if self.mirror_transmission is None:
            t = max(1.0 - self.mirror_reflectivity - MIRROR_ABSORPTION, 0.0)
            object.__setattr__(self, "mirror_transmission", t)
        r, t = self.mirror_reflectivity, self.mirror_transmission
        if not (0 <= r <= 1 and 0 <= t <= 1) or r + t > 1 + 1e-15:
            raise InvalidGeometryError(
                f"mirror R={r}, T={t}: need R, T in [0, 1] and R + T <= 1")
        if self.mirror_roc <= 0 or self.geometric_length <= 0:
            raise InvalidGeometryError("mirror_roc and geometric_length must be > 0")
        if self.diamond_thickness < 0 or self.diamond_index < 1:
            raise InvalidGeometryError("diamond thickness >= 0 and index >= 1 required")
        if self.seed_wavelength <= 0:
            raise InvalidGeometryError("seed_wavelength must be > 0")

    @property
    def is_stable(self):
        return 0 < self.geometric_length < 2 * self.mirror_roc

    def optical_length(self):
        plate = optical_path_brewster(self.diamond_thickness, self.diamond_index)
        return self.geometric_length + plate.optical_length_added


@dataclass(frozen=True)
class LossBudget:
    base_loss_per_roundtrip: float
    nv_gain_per_pass: float = 0.0

    @property
    def net_loss(self):
        return self.base_loss_per_roundtrip - self.nv_gain_per_pass

    def check_below_threshold(self):
        if self.net_loss <= 0:
            raise AboveThresholdError(
                f"gain {self.nv_gain_per_pass:.4g} >= loss "
                f"{self.base_loss_per_roundtrip:.4g}: lasing threshold crossed")


def mode_waist(geom):
    """TEM00 waist of the empty symmetric cavity."""
    L, roc = geom.geometric_length, geom.mirror_roc
    if not geom.is_stable:
        raise StabilityError(
            f"L={L} m, ROC={roc} m: symmetric cavity needs 0 < L < 2 ROC")
    return np.sqrt(geom.seed_wavelength / (2 * np.pi) * np.sqrt(L * (2 * roc - L)))


class BrewsterPath(NamedTuple):
    brewster_angle: float
    internal_angle: float
    single_pass_path: float
    optical_length_added: float


def optical_path_brewster(thickness, index):
    if index < 1:
        raise InvalidGeometryError("refractive index must be >= 1")
    theta_b = np.arctan(index)
    theta_i = np.arcsin(np.sin(theta_b) / index)
    path = thickness / np.cos(theta_i)
    footprint = path * np.cos(theta_b - theta_i)
    return BrewsterPath(theta_b, theta_i, path, index * path - footprint)


def free_spectral_range(optical_length):
    if optical_length <= 0:
        raise InvalidGeometryError("optical length must be > 0")
    return C_LIGHT / (2.0 * optical_length)


def finesse_from_losses(budget):
    budget.check_below_threshold()
    return np.pi / budget.net_loss


def loss_from_finesse(finesse):
    return np.pi / finesse


def net_gain_from_finesse_pair(f0, fg, medium_length):
    """Net gain per metre from the unpumped/pumped finesse pair."""
    return np.pi / medium_length * (1.0 / f0 - 1.0 / fg)


class PeakPowers(NamedTuple):
    transmitted_peak: float
    reflected_peak: float
    circulating: float


def peak_output_powers(seed_power, geom, budget, birefringence_reflectance,
                       mode_matching=1.0):
    """On-resonance transmitted and reflected (pick-off) powers.

    All passive loss beyond mirror leakage is lumped into one single-pass
    internal factor, so that ``1 - R G`` equals the budget's net loss to
    first order.
    """
    if seed_power < 0 or birefringence_reflectance < 0:
        raise ValueError("seed power and pick-off reflectance must be >= 0")
    budget.check_below_threshold()
    r = geom.mirror_reflectivity
    t = geom.mirror_transmission
    internal = budget.base_loss_per_roundtrip - (1.0 - r)
    g = np.exp(budget.nv_gain_per_pass - internal)
    denom = (1.0 - r * g) ** 2
    if not (r * g < 1):
        raise AboveThresholdError("round-trip factor reached unity")
    coupled = seed_power * mode_matching
    circulating = coupled * t / denom
    transmitted = circulating * t * g
    reflected = circulating * birefringence_reflectance
    return PeakPowers(transmitted, reflected, circulating)


def lorentzian_lineshape(x, center, fwhm):
    return 1.0 / (1.0 + (2.0 * (x - center) / fwhm) ** 2)


def airy_lineshape(phase, finesse):
    """Normalized Airy transmission for round-trip phase ``phase``."""
    coeff = (2.0 * finesse / np.pi) ** 2
    return 1.0 / (1.0 + coeff * np.sin(phase / 2.0) ** 2)
