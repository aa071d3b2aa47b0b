"""Composition of the spin model and the cavity into one operating point.

The seeded intracavity field depletes the excited state through
stimulated emission, which lowers the gain and therefore the
intracavity power; the operating point is the self-consistent
solution of that loop.
"""

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from . import cavity as cav
from . import spin_model as sm
from .constants import SEED_WAVELENGTH, TETRAHEDRAL_ANGLE_DEG, photon_energy


@dataclass(frozen=True)
class OdmrDrive:
    """Microwave drive seen by one detection channel.

    The drive adds a ground-state mixing rate ``rate * L(f - f_i)`` at each
    of the two transitions ``f_i = D -+ splitting/2``, where ``L`` is a
    unit-height Lorentzian of FWHM ``linewidth``. ``spread`` is the relative
    Gaussian spread of the drive amplitude over the probed ensemble.
    """

    rate: float = 2e6
    linewidth: float = 4e6
    spread: float = 0.3
    splitting: float = 9e6


@dataclass(frozen=True)
class Physics:
    rates: sm.NvRates = field(default_factory=lambda: sm.NvRates(mix_ground=200.0))
    medium: sm.GainMediumParams = field(default_factory=sm.GainMediumParams)
    geometry: cav.CavityGeometry = field(default_factory=cav.CavityGeometry)
    base_finesse: float = 1144.0
    pump_waist: float = 55.5e-6
    pump_cross_section: float = 3e-21
    birefringence_reflectance: float = 1.44e-3
    mode_matching: float = 0.3
    magnet_field: float = 0.182
    tetrahedral_angle: float = float(np.deg2rad(TETRAHEDRAL_ANGLE_DEG))
    mix_rate_max: float = 1e7
    # field-insensitive PL, as a fraction of the magnet-off NV- PL
    pl_background: float = 0.0
    # detected PL power per unit NV- emission rate (W s)
    pl_scale: float = 1e-12
    odmr_cavity: OdmrDrive = field(default_factory=OdmrDrive)
    odmr_pl: OdmrDrive = field(default_factory=OdmrDrive)

    @property
    def base_loss(self):
        return cav.loss_from_finesse(self.base_finesse)

    @property
    def gain_length(self):
        return self.medium.medium_thickness

    def with_(self, **changes):
        return replace(self, **changes)


def magnet_mixing_rate(physics, b_magnitude=None):
    """Incoherent m_s mixing rate produced by a (100) permanent-magnet field."""
    b = physics.magnet_field if b_magnitude is None else b_magnitude
    if b == 0:
        return 0.0
    bx = sm.effective_transverse_field(b, physics.tetrahedral_angle)
    levels = sm.zeeman_levels(sm.SpinHamiltonianParams(b_field=(bx, 0.0, 0.0)))
    return levels.ground_mixing_rate_scale * physics.mix_rate_max


def pump_rate(physics, pump_power):
    return sm.pump_rate_from_power(pump_power, physics.pump_waist,
                                   physics.pump_cross_section).pump_rate


def ensemble_populations(physics, pump_power, mixing=0.0, stim_rate=0.0,
                         mw_rates=None, weights=None):
    """Populations averaged over an ensemble of microwave mixing rates.

    ``mw_rates`` adds ground-state-only mixing per ensemble member.
    """
    rates = sm.with_pumping(physics.rates, pump_rate(physics, pump_power),
                            mixing, stim_rate)
    if mw_rates is None:
        return sm.steady_state_populations(rates)
    w = np.asarray(weights, dtype=float)
    pops = sm.steady_state_batch(rates, mw_rates)
    return sm.NvPopulations(*(w @ pops / w.sum()))


def small_signal_gain(physics, pump_power, mixing=0.0):
    pops = ensemble_populations(physics, pump_power, mixing)
    return sm.gain_coefficient(pops, physics.medium, pump_power)


def stim_rate_for(physics, circulating):
    w0 = cav.mode_waist(physics.geometry)
    # counter-propagating passes through the plate at the mode waist
    intensity = 4.0 * circulating / (np.pi * w0**2)
    return (physics.medium.stim_cross_section * intensity
            / photon_energy(physics.geometry.seed_wavelength))


class OperatingPoint(NamedTuple):
    pump_power: float
    seed_power: float
    populations: sm.NvPopulations
    net_gain: float  # 1/m
    finesse: float
    transmitted: float
    reflected: float
    circulating: float
    pl_per_nv: float


def operating_point(physics, pump_power, seed_power, mixing=0.0,
                    mw_rates=None, weights=None):
    """Self-consistent steady state of the pumped, seeded cavity."""
    geom = physics.geometry
    base = physics.base_loss
    length = physics.gain_length

    def evaluate(circulating):
        pops = ensemble_populations(physics, pump_power, mixing,
                                    stim_rate_for(physics, circulating),
                                    mw_rates, weights)
        gain = sm.gain_coefficient(pops, physics.medium, pump_power)
        return pops, gain, cav.LossBudget(base, gain * length)

    def outputs(budget):
        return cav.peak_output_powers(seed_power, geom, budget,
                                      physics.birefringence_reflectance,
                                      physics.mode_matching)

    def build_up(circulating):
        _, _, budget = evaluate(circulating)
        if budget.net_loss <= 0:
            return np.inf
        return outputs(budget).circulating

    circ = 0.0
    if seed_power > 0 and physics.medium.stim_cross_section > 0 and pump_power > 0:
        # build_up is decreasing (more field, less gain), so its fixed point
        # lies between build_up(build_up(0)) and build_up(0)
        hi = build_up(0.0)
        if np.isinf(hi):
            hi = seed_power
            while np.isinf(build_up(hi)) or build_up(hi) > hi:
                hi *= 4.0
        lo = build_up(hi)
        if hi - lo > 1e-13 * hi:
            circ = brentq(lambda c: c - build_up(c), lo, hi, xtol=1e-15, rtol=1e-13)
        else:
            circ = hi
    pops, gain, budget = evaluate(circ)
    out = outputs(budget)
    pl = physics.rates.radiative_decay * pops.excited
    return OperatingPoint(pump_power, seed_power, pops, gain,
                          cav.finesse_from_losses(budget), out.transmitted_peak,
                          out.reflected_peak, out.circulating, pl)


def seed_photon_energy(physics=None):
    wl = SEED_WAVELENGTH if physics is None else physics.geometry.seed_wavelength
    return photon_energy(wl)
