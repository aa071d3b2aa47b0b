"""Synthetic versions of the measured datasets.

Grid evaluations (maps, spectra) go through :func:`grid_map`, which may
use worker processes but always returns results in grid order.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import partial

import numpy as np

from . import cavity as cav
from .analysis.observables import amplification, contrast
from .constants import ZERO_FIELD_SPLITTING, photon_energy
from .data import OdmrSpectrum, PowerMap, ScanTrace
from .physics import (
    magnet_mixing_rate,
    operating_point,
    small_signal_gain,
)

QUADRATURE_POINTS = 16


@dataclass(frozen=True)
class ScanConfig:
    scan_amplitude: float = 3e-6
    scan_frequency: float = 111.0
    samples_per_scan: int = 100_000
    seed_power: float = 0.3
    pump_power: float = 0.0
    magnet_field: float = 0.0  # T; 0 means magnet away
    rng_seed: int = 0
    channel: str = "transmitted"
    shot_noise: bool = True
    detector_nep: float = 1e-11  # W/sqrt(Hz)
    # first resonance sits this fraction of a half wavelength into the scan
    peak_offset: float = 0.5

    def __post_init__(self):
        if not self.scan_amplitude > 0:
            raise ValueError("scan_amplitude must be > 0")
        if self.samples_per_scan < 100:
            raise ValueError("samples_per_scan must be >= 100")
        if self.channel not in ("transmitted", "reflected"):
            raise ValueError(f"unknown channel {self.channel!r}")

    @property
    def noise_bandwidth(self):
        return 0.5 * self.samples_per_scan * self.scan_frequency


def grid_map(func, points, jobs=1):
    """``[func(p) for p in points]``, optionally across worker processes."""
    points = list(points)
    if jobs is None or jobs <= 1 or len(points) < 2:
        return [func(p) for p in points]
    chunk = max(1, len(points) // (4 * jobs))
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, points, chunksize=chunk))


def add_detection_noise(power, photon_e, bandwidth, nep, rng, shot_noise=True):
    """Gaussian shot noise (variance P h nu B) plus a white detector floor."""
    var = np.full_like(power, (nep ** 2) * bandwidth)
    if shot_noise:
        var = var + power * photon_e * bandwidth
    return power + rng.standard_normal(power.shape) * np.sqrt(var)


def synthesize_trace(cfg, physics):
    """Piezo scan of the cavity length over several TEM00 resonances."""
    lam = physics.geometry.seed_wavelength
    half = lam / 2.0
    mixing = magnet_mixing_rate(physics, cfg.magnet_field) if cfg.magnet_field else 0.0
    op = operating_point(physics, cfg.pump_power, cfg.seed_power, mixing)
    height = op.transmitted if cfg.channel == "transmitted" else op.reflected
    x = np.linspace(0.0, cfg.scan_amplitude, cfg.samples_per_scan)
    centers = np.arange(cfg.peak_offset * half, cfg.scan_amplitude, half)
    fwhm = half / op.finesse
    if op.finesse > cav.LORENTZIAN_FINESSE_THRESHOLD:
        clean = np.zeros_like(x)
        for c in centers:
            clean += height * cav.lorentzian_lineshape(x, c, fwhm)
    else:
        phase = 4 * np.pi * (x - centers[0]) / lam
        clean = height * cav.airy_lineshape(phase, op.finesse)
    rng = np.random.default_rng(cfg.rng_seed)
    power = add_detection_noise(clean, photon_energy(lam), cfg.noise_bandwidth,
                                cfg.detector_nep, rng, cfg.shot_noise)
    truth = {"finesse": float(op.finesse), "peak_positions": centers.tolist(),
             "fwhm": float(fwhm), "fsr": float(half), "height": float(height),
             "net_gain": float(op.net_gain)}
    return ScanTrace(x, np.clip(power, 0.0, None), cfg.channel, truth)


def noiseless(cfg):
    return replace(cfg, shot_noise=False, detector_nep=0.0)


def net_gain_vs_pump(pump_powers, physics):
    """Small-signal net gain (1/m) at each pump power."""
    return np.array([small_signal_gain(physics, p) for p in pump_powers])


def _amplification_point(physics, point):
    pump, seed = point
    a = operating_point(physics, pump, seed).transmitted
    a0 = operating_point(physics, 0.0, seed).transmitted
    return amplification(a, a0) if a0 > 0 else 0.0


def _contrast_point(physics, b_field, point):
    pump, seed = point
    if b_field == 0:
        return 0.0
    a = operating_point(physics, pump, seed).transmitted
    a_mag = operating_point(physics, pump, seed,
                            magnet_mixing_rate(physics, b_field)).transmitted
    return contrast(a, a_mag) if a > 0 else 0.0


def _grid(pump_grid, seed_grid):
    return [(p, s) for p in pump_grid for s in seed_grid]


def amplification_map(pump_grid, seed_grid, physics, jobs=1):
    vals = grid_map(partial(_amplification_point, physics),
                    _grid(pump_grid, seed_grid), jobs)
    return PowerMap(pump_grid, seed_grid, vals, "amplification")


def contrast_map(pump_grid, seed_grid, b_field, physics, jobs=1):
    vals = grid_map(partial(_contrast_point, physics, b_field),
                    _grid(pump_grid, seed_grid), jobs)
    return PowerMap(pump_grid, seed_grid, vals, "contrast")


def pl_power(physics, op, reference=None):
    """Detected PL: NV- emission plus a field-insensitive background.

    The background is a fixed fraction of the magnet-off emission at the
    same pump power (``reference``, defaults to ``op``).
    """
    ref = op if reference is None else reference
    return physics.pl_scale * (op.pl_per_nv + physics.pl_background * ref.pl_per_nv)


def magnet_toggle_timeseries(duration, toggle_window, physics, pump_power=3.4,
                             seed_power=0.025, sample_rate=10.0, noise=0.0,
                             rng_seed=0):
    """PL and cavity amplitude while a magnet is brought in and removed.

    ``toggle_window`` is ``(t_on, t_off)``; ``noise`` is a relative
    Gaussian noise level applied to both channels.
    """
    t_on, t_off = toggle_window
    if not 0 <= t_on < t_off <= duration:
        raise ValueError("toggle window must lie within the duration")
    t = np.arange(0.0, duration, 1.0 / sample_rate)
    off = operating_point(physics, pump_power, seed_power)
    on = operating_point(physics, pump_power, seed_power, magnet_mixing_rate(physics))
    present = (t >= t_on) & (t < t_off)
    pl = np.where(present, pl_power(physics, on, off), pl_power(physics, off))
    cavity = np.where(present, on.transmitted, off.transmitted)
    if noise:
        rng = np.random.default_rng(rng_seed)
        pl = pl * (1 + noise * rng.standard_normal(t.size))
        cavity = cavity * (1 + noise * rng.standard_normal(t.size))

    def plateau_contrast(y):
        return contrast(np.mean(y[~present]), np.mean(y[present]))

    return {"t": t, "pl": pl, "cavity_amplitude": cavity, "magnet": present,
            "pl_contrast": float(plateau_contrast(pl)),
            "cavity_contrast": float(plateau_contrast(cavity))}


def drive_quadrature(spread, n=QUADRATURE_POINTS):
    """Nodes (relative drive power) and weights of a Gaussian amplitude spread."""
    z, w = np.polynomial.hermite_e.hermegauss(n)
    amp = np.clip(1.0 + spread * z, 0.0, None)
    return amp ** 2, w / w.sum()


def odmr_spectrum(freq_grid, physics, channel, pump_power=2.78, seed_power=1.51e-3,
                  output="transmitted", noise=0.0, rng_seed=0, center=ZERO_FIELD_SPLITTING,
                  jobs=1):
    """Detected power versus microwave frequency for ``channel`` in {cavity, pl}.

    For the cavity channel ``output`` selects the transmitted or the
    reflected (pick-off) amplitude. ``noise`` is relative to the off-resonant
    level.
    """
    drive = physics.odmr_cavity if channel == "cavity" else physics.odmr_pl
    freqs = np.asarray(freq_grid, dtype=float)
    transitions = (center - drive.splitting / 2, center + drive.splitting / 2)
    nodes, weights = drive_quadrature(drive.spread)
    reference = operating_point(physics, pump_power, seed_power)
    point = partial(_odmr_point, physics, channel, drive, transitions,
                    nodes, weights, pump_power, seed_power, output, reference)
    n, m = freqs.size, freqs.size // 2
    if n > 2 and np.allclose(freqs + freqs[::-1], 2 * center, rtol=0, atol=1e-6 * np.ptp(freqs)):
        # the line pair is symmetric about the centre: evaluate one half
        half = np.array(grid_map(point, freqs[m:], jobs))
        power = np.concatenate([(half[1:] if n % 2 else half)[::-1], half])
    else:
        power = np.array(grid_map(point, freqs, jobs))
    if noise:
        rng = np.random.default_rng(rng_seed)
        power = power + noise * np.max(power) * rng.standard_normal(power.shape)
    truth = {"transitions": list(transitions), "drive_rate": drive.rate,
             "linewidth": drive.linewidth, "spread": drive.spread}
    return OdmrSpectrum(freqs, power, channel, truth)


def _odmr_point(physics, channel, drive, transitions, nodes, weights,
                pump_power, seed_power, output, reference, f):
    profile = sum(cav.lorentzian_lineshape(f, f0, drive.linewidth) for f0 in transitions)
    mw = drive.rate * profile * nodes
    op = operating_point(physics, pump_power, seed_power, mw_rates=mw, weights=weights)
    if channel == "pl":
        return pl_power(physics, op, reference)
    return op.transmitted if output == "transmitted" else op.reflected
