"""Five-level steady-state model of the NV- centre.

Levels (index order used by the rate matrix)::

    0  g0  ground triplet, m_s = 0
    1  g1  ground triplet, m_s = +-1 (merged)
    2  e0  excited triplet, m_s = 0
    3  e1  excited triplet, m_s = +-1 (merged)
    4  s   singlet shelf

Magnetic and microwave spin mixing enter as incoherent, symmetric
g0 <-> g1 and e0 <-> e1 rates.
"""

from dataclasses import dataclass, fields, replace
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.sparse.csgraph import connected_components

from .constants import (
    GYROMAGNETIC_RATIO,
    PUMP_WAVELENGTH,
    ZERO_FIELD_SPLITTING,
    photon_energy,
)
from .errors import InvalidGeometryError, NoSteadyStateError

LEVELS = ("g0", "g1", "e0", "e1", "s")


@dataclass(frozen=True)
class NvRates:
    """Transition rates in 1/s, per NV centre."""

    pump_rate: float = 0.0
    radiative_decay: float = 6.5e7
    isc_e0: float = 8e6
    isc_e1: float = 5e7
    singlet_decay: float = 3.3e6
    singlet_branch_g0: float = 0.6
    mix_ground: float = 0.0
    mix_excited: float = 0.0
    # seeded 710 nm field driving e -> g, spin conserving
    stim_rate: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{f.name} must be finite and >= 0, got {value!r}")
        if self.singlet_branch_g0 > 1:
            raise ValueError("singlet_branch_g0 must lie in [0, 1]")


@dataclass(frozen=True)
class NvPopulations:
    g0: float
    g1: float
    e0: float
    e1: float
    s: float

    @property
    def excited(self):
        return self.e0 + self.e1

    @property
    def ground_polarization(self):
        """Fraction of ground population in m_s = 0."""
        ground = self.g0 + self.g1
        return self.g0 / ground if ground > 0 else float("nan")

    def as_array(self):
        return np.array([self.g0, self.g1, self.e0, self.e1, self.s])


@dataclass(frozen=True)
class SpinHamiltonianParams:
    zero_field_D: float = ZERO_FIELD_SPLITTING
    strain_E: float = 0.0
    gyromagnetic_ratio: float = GYROMAGNETIC_RATIO
    b_field: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.zero_field_D <= 0:
            raise ValueError("zero_field_D must be > 0")
        if self.gyromagnetic_ratio <= 0:
            raise ValueError("gyromagnetic_ratio must be > 0")
        if len(self.b_field) != 3:
            raise ValueError("b_field must be a 3-vector")


@dataclass(frozen=True)
class GainMediumParams:
    nv_density: float = 3.2e23  # 1/m^3, ~1.8 ppm
    stim_cross_section: float = 1e-21  # m^2
    medium_thickness: float = 295e-6
    intrinsic_absorption: float = 1.0  # 1/m
    induced_absorption_coeff: float = 0.0  # 1/(m W)

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{f.name} must be finite and >= 0, got {value!r}")


class PumpRate(NamedTuple):
    intensity: float
    pump_rate: float


def pump_rate_from_power(power, beam_waist, cross_section=3e-21,
                         wavelength=PUMP_WAVELENGTH):
    """Peak intensity P/(pi w^2) of the pump and the resulting excitation rate."""
    if not beam_waist > 0:
        raise InvalidGeometryError(f"beam waist must be > 0, got {beam_waist!r}")
    if power < 0:
        raise ValueError("pump power must be >= 0")
    intensity = power / (np.pi * beam_waist**2)
    rate = intensity * cross_section / photon_energy(wavelength)
    return PumpRate(intensity, rate)


def rate_matrix(rates):
    """Generator M with dP/dt = M @ P; column i holds the outflow of level i."""
    r = rates
    k = np.zeros((5, 5))

    def add(src, dst, value):
        k[dst, src] += value
        k[src, src] -= value

    add(0, 2, r.pump_rate)
    add(1, 3, r.pump_rate)
    add(2, 0, r.radiative_decay + r.stim_rate)
    add(3, 1, r.radiative_decay + r.stim_rate)
    add(2, 4, r.isc_e0)
    add(3, 4, r.isc_e1)
    add(4, 0, r.singlet_decay * r.singlet_branch_g0)
    add(4, 1, r.singlet_decay * (1.0 - r.singlet_branch_g0))
    add(0, 1, r.mix_ground)
    add(1, 0, r.mix_ground)
    add(2, 3, r.mix_excited)
    add(3, 2, r.mix_excited)
    return k


def _closed_classes(m):
    pattern = (m > 0).T
    np.fill_diagonal(pattern, False)
    return _closed_classes_of(np.packbits(pattern).tobytes())


@lru_cache(maxsize=256)
def _closed_classes_of(packed):
    # depends only on which transitions exist, so it is cached by pattern
    adjacency = np.unpackbits(np.frombuffer(packed, dtype=np.uint8))[:25].reshape(5, 5)
    n, labels = connected_components(adjacency, directed=True, connection="strong")
    leaving = np.zeros(n, dtype=bool)
    for src, dst in zip(*np.nonzero(adjacency)):
        if labels[src] != labels[dst]:
            leaving[labels[src]] = True
    return int(np.count_nonzero(~leaving))


def steady_state_populations(rates):
    m = rate_matrix(rates)
    scale = np.max(np.abs(m))
    if scale == 0:
        raise NoSteadyStateError("all transition rates are zero")
    if _closed_classes(m) > 1:
        raise NoSteadyStateError(
            "rate matrix has more than one closed class; steady state not unique")
    # replace one balance equation by the normalization
    a = m / scale
    a[-1, :] = 1.0
    b = np.zeros(5)
    b[-1] = 1.0
    p = np.linalg.solve(a, b)
    p = np.clip(p, 0.0, None)
    p /= p.sum()
    return NvPopulations(*p)


def steady_state_batch(rates, extra_mix_ground):
    """Steady states for ``rates`` with each extra ground mixing rate added.

    Returns an array of shape (n, 5) in ``LEVELS`` order.
    """
    extra = np.asarray(extra_mix_ground, dtype=float)
    base = rate_matrix(rates)
    widest = rate_matrix(replace(rates, mix_ground=rates.mix_ground + float(extra.max(initial=0))))
    if np.max(np.abs(base)) == 0 and not np.any(extra):
        raise NoSteadyStateError("all transition rates are zero")
    if _closed_classes(widest) > 1 or (np.any(extra == 0) and _closed_classes(base) > 1):
        raise NoSteadyStateError(
            "rate matrix has more than one closed class; steady state not unique")
    m = np.broadcast_to(base, (extra.size, 5, 5)).copy()
    m[:, 1, 0] += extra
    m[:, 0, 0] -= extra
    m[:, 0, 1] += extra
    m[:, 1, 1] -= extra
    scale = np.max(np.abs(m), axis=(1, 2))[:, None, None]
    a = m / scale
    a[:, -1, :] = 1.0
    b = np.zeros((extra.size, 5))
    b[:, -1] = 1.0
    p = np.clip(np.linalg.solve(a, b[..., None])[..., 0], 0.0, None)
    return p / p.sum(axis=1, keepdims=True)


def pl_rate(pops, rates):
    """Spontaneous photon emission rate per NV (1/s)."""
    return rates.radiative_decay * (pops.e0 + pops.e1)


def gain_coefficient(pops, medium, pump_power):
    """Net NV gain per metre: stimulated emission minus pump-induced absorption.

    Host absorption of the diamond is part of the cavity loss budget and
    is not subtracted here.
    """
    stim = medium.nv_density * medium.stim_cross_section * (pops.e0 + pops.e1)
    return stim - medium.induced_absorption_coeff * pump_power


class ZeemanLevels(NamedTuple):
    transition_freqs: tuple
    ground_mixing_rate_scale: float


def spin1_operators():
    sx = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex) / np.sqrt(2)
    sy = np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]]) / np.sqrt(2)
    sz = np.diag([1.0, 0.0, -1.0]).astype(complex)
    return sx, sy, sz


def ground_hamiltonian(params):
    """Ground-triplet Hamiltonian in Hz, basis (|+1>, |0>, |-1>)."""
    sx, sy, sz = spin1_operators()
    bx, by, bz = params.b_field
    g = params.gyromagnetic_ratio
    return (params.zero_field_D * sz @ sz
            + params.strain_E * (sx @ sx - sy @ sy)
            + g * (bx * sx + by * sy + bz * sz))


def zeeman_levels(params):
    """Ground-state ODMR transition frequencies and m_s=0 admixture.

    The mixing scale is ``2 * (1 - p0)`` clipped to 1, where ``p0`` is the
    m_s=0 weight of the most m_s=0-like eigenstate; 1 means that state
    is an equal superposition of m_s=0 and the +-1 manifold.
    """
    energies, vectors = np.linalg.eigh(ground_hamiltonian(params))
    weight0 = np.abs(vectors[1, :]) ** 2
    i0 = int(np.argmax(weight0))
    others = [energies[i] - energies[i0] for i in range(3) if i != i0]
    freqs = tuple(sorted(float(abs(f)) for f in others))
    mixing = min(1.0, 2.0 * (1.0 - float(weight0[i0])))
    return ZeemanLevels(freqs, max(mixing, 0.0))


def effective_transverse_field(b_magnitude, tetrahedral_angle):
    """B_x = B cos(alpha/2) for a (100) field over all four NV orientations."""
    if b_magnitude < 0:
        raise ValueError("field magnitude must be >= 0")
    return b_magnitude * np.cos(tetrahedral_angle / 2.0)


def with_pumping(rates, pump_rate, mixing=0.0, stim_rate=0.0):
    """Copy of ``rates`` with pump, stimulated and extra spin-mixing rates set.

    ``mixing`` is added on top of the intrinsic ground/excited mixing.
    """
    return replace(rates, pump_rate=pump_rate, stim_rate=stim_rate,
                   mix_ground=rates.mix_ground + mixing,
                   mix_excited=rates.mix_excited + mixing)
