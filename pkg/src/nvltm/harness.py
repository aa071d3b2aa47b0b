"""Calibration, figure reproduction and parameter sweeps written to disk.

All outputs of a command go through one :class:`ArtifactWriter`, which
records the content hash of every file for the run manifest. Outputs
depend only on the config and its ``run.rng_seed``; the manifest's
wall-clock duration is the one field that changes between reruns.
"""

import itertools
import json
import math
import time
from dataclasses import asdict, dataclass, field
from functools import partial
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from . import __version__
from . import calibration as cal
from .analysis import (
    amplification,
    contrast,
    finesse_from_trace,
    fit_double_lorentzian,
    shot_noise_sensitivity,
)
from .cavity import net_gain_from_finesse_pair
from .config import SCHEMA, physics_from_config, physics_to_values, validate
from .data import PowerMap, file_sha256, write_columns, write_map
from .errors import CalibrationError, ConfigError, DegenerateFitError, MissingCalibrationError
from .physics import magnet_mixing_rate, operating_point, small_signal_gain
from .simulate import (
    ScanConfig,
    _amplification_point,
    _contrast_point,
    amplification_map,
    contrast_map,
    grid_map,
    magnet_toggle_timeseries,
    odmr_spectrum,
    synthesize_trace,
)

TARGETS = ("fig2a", "fig2b", "fig2c", "fig3a", "fig3b", "fig3c", "fig3d", "fig4a", "fig4b")
SWEEP_QUANTITIES = ("amplification", "contrast", "transmitted", "reflected",
                    "net_gain", "finesse")
POWER_AXES = ("pump_W", "seed_W")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj):
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


class ArtifactWriter:
    """Single writer for one output directory; remembers what it wrote."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files = []

    def _record(self, name):
        path = self.root / name
        self.files.append({"path": name, "sha256": file_sha256(path)})
        return path

    def json(self, name, obj):
        (self.root / name).write_text(dumps(obj))
        return self._record(name)

    def columns(self, name, columns):
        write_columns(self.root / name, columns)
        return self._record(name)

    def power_map(self, name, pmap):
        write_map(self.root / name, pmap)
        return self._record(name)


@dataclass
class RunManifest:
    command: str
    config: dict
    calibration: dict
    tool_version: str
    files: list = field(default_factory=list)
    duration_s: float = 0.0

    def to_dict(self):
        return asdict(self)

    def verify(self, root):
        """Names of listed files that are missing or no longer match."""
        bad = []
        for entry in self.files:
            path = Path(root) / entry["path"]
            if not path.is_file() or file_sha256(path) != entry["sha256"]:
                bad.append(entry["path"])
        return bad

    @classmethod
    def load(cls, path):
        return cls(**json.loads(Path(path).read_text()))


def _finish(writer, command, cfg, record, started):
    manifest = RunManifest(command, cfg.snapshot(), record or {}, __version__,
                           list(writer.files), time.perf_counter() - started)
    (writer.root / f"{command}_manifest.json").write_text(dumps(manifest.to_dict()))
    return manifest


# -- calibration -----------------------------------------------------------

def calibration_path(cfg):
    explicit = cfg["run.calibration_file"]
    return Path(explicit) if explicit else cfg.output_dir / "calibration.json"


def gain_targets(cfg):
    return cal.GainTargets(peak_gain=cfg["targets.peak_gain"], peak_pump=cfg["targets.peak_pump"],
                           zero_pump=cfg["targets.zero_pump"],
                           max_contrast=cfg["targets.max_contrast"],
                           contrast_seed=cfg["targets.contrast_seed"])


def odmr_targets(cfg, channel):
    p = f"targets.odmr_{channel}_"
    return cal.OdmrTargets(contrast=cfg[p + "contrast"], width=cfg[p + "width"],
                           overall=cfg[p + "overall"], pump_power=cfg["fig4.pump"],
                           seed_power=cfg["fig4.seed"], span=cfg["fig4.span"],
                           points=cfg["fig4.points"])


def run_calibration(cfg, out_dir=None):
    """Fit every calibrated parameter and write ``calibration.json``.

    Order: gain model (four parameters), PL background, ODMR drives, PL
    collection scale. Returns the record that was written.
    """
    started = time.perf_counter()
    physics = physics_from_config(cfg)
    bounds = {k: tuple(cfg[f"bounds.{k}"]) for k in cal.GAIN_PARAMS}
    gain = cal.calibrate_gain_model(physics, gain_targets(cfg), bounds)
    physics = gain.physics
    physics, raw_pl = cal.calibrate_pl_background(physics, cfg["targets.pl_contrast"],
                                                  cfg["fig3c.pump"], cfg["fig3c.seed"])
    odmr = {}
    for channel in ("cavity", "pl"):
        physics, odmr[channel] = cal.calibrate_odmr_channel(physics, channel,
                                                            odmr_targets(cfg, channel))
    powers = cal.detected_powers_for_sensitivity(
        cfg["targets.sensitivity_pl"], cfg["targets.sensitivity_cavity"],
        odmr_targets(cfg, "pl"), odmr_targets(cfg, "cavity"),
        seed_wavelength=cfg["cavity.seed_wavelength"])
    physics = cal.calibrate_pl_scale(physics, powers["pl"], cfg["fig4.pump"], cfg["fig4.seed"])
    record = {
        "params": physics_to_values(physics),
        "gain": gain.to_dict(),
        "pl_background": {"raw_contrast": raw_pl, "target": cfg["targets.pl_contrast"]},
        "odmr": odmr,
        "detected_power_pl_W": powers["pl"],
        "config_digest": cfg.digest(),
    }
    writer = ArtifactWriter(out_dir or calibration_path(cfg).parent)
    target = calibration_path(cfg) if out_dir is None else Path(out_dir) / "calibration.json"
    writer.json(target.name, record)
    _finish(writer, "calibrate", cfg, {"params": record["params"]}, started)
    return record


def load_calibration(cfg):
    path = calibration_path(cfg)
    if not path.is_file():
        raise MissingCalibrationError(
            f"no calibration found at {path}; run `nvltm calibrate` with the same "
            f"--config/--out first")
    return json.loads(path.read_text())


def calibrated_config(cfg, record=None):
    record = record or load_calibration(cfg)
    return cfg.with_overrides(record["params"], cfg.source)


def calibrated_physics(cfg, record=None):
    return physics_from_config(calibrated_config(cfg, record))


# -- reproductions ---------------------------------------------------------

def _child_seed(cfg, *tags):
    ss = np.random.SeedSequence([cfg.rng_seed, *tags])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _scan(cfg, pump, seed, stream, magnet=0.0):
    return ScanConfig(scan_amplitude=cfg["scan.amplitude"], scan_frequency=cfg["scan.frequency"],
                      samples_per_scan=cfg["scan.samples"], seed_power=seed, pump_power=pump,
                      magnet_field=magnet, rng_seed=_child_seed(cfg, stream),
                      shot_noise=cfg["scan.shot_noise"], detector_nep=cfg["scan.detector_nep"])


def _trace_summary(trace):
    res = finesse_from_trace(trace)
    return {"finesse": res.finesse, "finesse_err": res.uncertainty,
            "amplitude_W": float(np.mean([f.amplitude for f in res.peaks])),
            "fwhm_m": res.mean_fwhm, "fsr_m": res.fsr, "true_finesse": trace.truth["finesse"]}


def _fig2a(cfg, physics, writer, jobs):
    ph = physics.with_(base_finesse=cfg["fig2a.base_finesse"])
    pump, seed = cfg["fig2a.pump"], cfg["fig2a.seed"]
    off = synthesize_trace(_scan(cfg, 0.0, seed, 1), ph)
    on = synthesize_trace(_scan(cfg, pump, seed, 2), ph)
    pump_only = synthesize_trace(_scan(cfg, pump, 0.0, 3), ph)
    writer.columns("fig2a.csv", {"position_m": off.positions, "unpumped_W": off.detected_power,
                                 "pumped_W": on.detected_power,
                                 "pump_only_W": pump_only.detected_power})
    s_off, s_on = _trace_summary(off), _trace_summary(on)
    return {"unpumped": s_off, "pumped": s_on,
            "amplification": amplification(s_on["amplitude_W"], s_off["amplitude_W"]),
            "pump_only_max_W": float(pump_only.detected_power.max())}


def _fig2b(cfg, physics, writer, jobs):
    pumps = np.linspace(0.0, cfg["fig2b.pump_max"], cfg["fig2b.points"])
    seed = cfg["fig2b.seed"]
    ops = [operating_point(physics, p, seed) for p in pumps]
    a0 = ops[0].transmitted
    writer.columns("fig2b.csv", {
        "pump_W": pumps,
        "net_gain_per_m": [small_signal_gain(physics, p) for p in pumps],
        "finesse": [op.finesse for op in ops],
        "transmitted_W": [op.transmitted for op in ops],
        "amplification": [amplification(op.transmitted, a0) for op in ops]})
    return cal.gain_report(physics, gain_targets(cfg))


def map_grids(cfg):
    return (np.linspace(cfg["maps.pump_min"], cfg["maps.pump_max"], cfg["maps.pump_points"]),
            np.linspace(cfg["maps.seed_min"], cfg["maps.seed_max"], cfg["maps.seed_points"]))


def _map_summary(pmap):
    pump, seed, best = pmap.argmax()
    return {"max": float(best), "argmax_pump_W": float(pump), "argmax_seed_W": float(seed)}


def _fig2c(cfg, physics, writer, jobs):
    pmap = amplification_map(*map_grids(cfg), physics, jobs=jobs)
    writer.power_map("fig2c.csv", pmap)
    return _map_summary(pmap)


def _fig3a(cfg, physics, writer, jobs):
    f0, fg = cfg["fig3a.base_finesse"], cfg["fig3a.pumped_finesse"]
    ph = physics.with_(base_finesse=f0)
    gain = net_gain_from_finesse_pair(f0, fg, ph.gain_length)
    # pump on the high-power side of the gain maximum, where the field
    # response is strong
    peak = cal.gain_report(ph, gain_targets(cfg))["peak_pump"]
    hi = cfg["targets.zero_pump"] * 2
    pump = float(brentq(lambda p: small_signal_gain(ph, p) - gain, peak, hi))
    seed = cfg["fig3a.seed"]
    traces = {"unpumped": synthesize_trace(_scan(cfg, 0.0, seed, 11), ph),
              "pumped": synthesize_trace(_scan(cfg, pump, seed, 12), ph),
              "pumped_magnet": synthesize_trace(_scan(cfg, pump, seed, 13, ph.magnet_field), ph)}
    writer.columns("fig3a.csv", {"position_m": traces["unpumped"].positions,
                                 **{f"{k}_W": t.detected_power for k, t in traces.items()}})
    out = {k: _trace_summary(t) for k, t in traces.items()}
    out["pump_W"] = pump
    out["amplification"] = amplification(out["pumped"]["amplitude_W"],
                                         out["unpumped"]["amplitude_W"])
    out["finesse_ratio_squared"] = (out["pumped"]["finesse"] / out["unpumped"]["finesse"]) ** 2 - 1
    return out


def _fig3b(cfg, physics, writer, jobs):
    pumps, seeds = map_grids(cfg)
    pmap = contrast_map(pumps, seeds, physics.magnet_field, physics, jobs=jobs)
    writer.power_map("fig3b.csv", pmap)
    out = _map_summary(pmap)
    rows = np.nonzero((pmap.values > 0.25).any(axis=1))[0]
    cols = np.nonzero((pmap.values > 0.25).any(axis=0))[0]
    out["plateau_pump_W"] = [float(pumps[rows[0]]), float(pumps[rows[-1]])] if rows.size else []
    out["plateau_seed_W"] = [float(seeds[cols[0]]), float(seeds[cols[-1]])] if cols.size else []
    return out


def _fig3c(cfg, physics, writer, jobs):
    ts = magnet_toggle_timeseries(cfg["fig3c.duration"],
                                  (cfg["fig3c.magnet_on"], cfg["fig3c.magnet_off"]), physics,
                                  cfg["fig3c.pump"], cfg["fig3c.seed"], cfg["fig3c.sample_rate"],
                                  cfg["fig3c.noise"], _child_seed(cfg, 31))
    writer.columns("fig3c.csv", {"time_s": ts["t"], "pl_W": ts["pl"],
                                 "cavity_W": ts["cavity_amplitude"],
                                 "magnet": ts["magnet"].astype(float)})
    return {"pl_contrast": ts["pl_contrast"], "cavity_contrast": ts["cavity_contrast"]}


def _fig3d(cfg, physics, writer, jobs):
    pumps = np.linspace(0.0, cfg["fig3d.pump_max"], cfg["fig3d.points"])
    seed = cfg["fig3d.seed"]
    mix = magnet_mixing_rate(physics)
    off = [operating_point(physics, p, seed) for p in pumps]
    on = [operating_point(physics, p, seed, mix) for p in pumps]
    cols = {"pump_W": pumps,
            "transmitted_W": [o.transmitted for o in off],
            "reflected_W": [o.reflected for o in off],
            "transmitted_magnet_W": [o.transmitted for o in on],
            "reflected_magnet_W": [o.reflected for o in on]}
    writer.columns("fig3d.csv", cols)
    t, tm = np.array(cols["transmitted_W"]), np.array(cols["transmitted_magnet_W"])
    r = np.array(cols["reflected_W"])
    return {"max_transmitted_W": float(t.max()), "max_reflected_W": float(r.max()),
            "reflected_over_transmitted": float(r.max() / t.max()),
            "peak_pump_W": float(pumps[np.argmax(t)]),
            "peak_pump_magnet_W": float(pumps[np.argmax(tm)]),
            "min_contrast": float(np.min(1 - tm[1:] / t[1:]))}


def _odmr_spectrum(cfg, physics, channel, seed, stream, jobs):
    freqs = cal.odmr_frequency_grid(odmr_targets(cfg, channel))
    return odmr_spectrum(freqs, physics, channel, cfg["fig4.pump"], seed,
                         noise=cfg[f"fig4.noise_{channel}"],
                         rng_seed=_child_seed(cfg, stream), jobs=jobs)


def _odmr_summary(spec):
    try:
        fit = fit_double_lorentzian(spec)
    except DegenerateFitError as exc:
        fit = exc.fallback
    d = fit.deepest
    return {"contrast": d.contrast, "width_Hz": d.width_fwhm, "overall_contrast":
            fit.overall_contrast, "centers_Hz": [x.center for x in fit.dips],
            "contrast_err": d.contrast_err, "width_err_Hz": d.width_err,
            "baseline_W": fit.baseline}


def _fig4a(cfg, physics, writer, jobs):
    spectra = {ch: _odmr_spectrum(cfg, physics, ch, cfg["fig4.seed"], 41 + k, jobs)
               for k, ch in enumerate(("cavity", "pl"))}
    writer.columns("fig4a.csv", {"frequency_Hz": spectra["cavity"].frequencies,
                                 "cavity_W": spectra["cavity"].power,
                                 "pl_W": spectra["pl"].power})
    return {ch: _odmr_summary(s) for ch, s in spectra.items()}


def sensitivities(fits, wavelength):
    return {ch: shot_noise_sensitivity(f["width_Hz"], f["contrast"], f["baseline_W"], wavelength)
            for ch, f in fits.items()}


def _fig4b(cfg, physics, writer, jobs):
    # the cavity channel is read out at high seed power; the PL channel
    # does not profit from seeding and keeps the low-seed conditions
    spectra = {"cavity": _odmr_spectrum(cfg, physics, "cavity", cfg["fig4b.seed"], 43, jobs),
               "pl": _odmr_spectrum(cfg, physics, "pl", cfg["fig4.seed"], 44, jobs)}
    writer.columns("fig4b.csv", {"frequency_Hz": spectra["cavity"].frequencies,
                                 "cavity_W": spectra["cavity"].power,
                                 "pl_W": spectra["pl"].power})
    fits = {ch: _odmr_summary(s) for ch, s in spectra.items()}
    eta = sensitivities(fits, physics.geometry.seed_wavelength)
    return {"fits": fits, "eta_pl_T_rtHz": eta["pl"], "eta_cavity_T_rtHz": eta["cavity"],
            "ratio": eta["cavity"] / eta["pl"]}


_REPRODUCERS = {"fig2a": _fig2a, "fig2b": _fig2b, "fig2c": _fig2c, "fig3a": _fig3a,
                "fig3b": _fig3b, "fig3c": _fig3c, "fig3d": _fig3d, "fig4a": _fig4a,
                "fig4b": _fig4b}


def reproduce(target, cfg, out_dir=None, jobs=None):
    """Write the dataset and headline numbers of one figure; returns
    ``(summary, manifest)``."""
    if target not in _REPRODUCERS:
        raise ConfigError([("run.target", f"unknown target {target!r}; "
                                          f"choose from {', '.join(TARGETS)}")])
    started = time.perf_counter()
    record = load_calibration(cfg)
    physics = calibrated_physics(cfg, record)
    writer = ArtifactWriter(out_dir or cfg.output_dir)
    summary = _REPRODUCERS[target](cfg, physics, writer, jobs or cfg["run.jobs"])
    writer.json(f"{target}_summary.json", summary)
    manifest = _finish(writer, target, cfg, {"params": record["params"]}, started)
    return summary, manifest


# -- sweeps ----------------------------------------------------------------

@dataclass(frozen=True)
class Axis:
    key: str
    start: float
    stop: float
    num: int

    @property
    def values(self):
        return np.linspace(self.start, self.stop, self.num)

    @classmethod
    def parse(cls, text):
        """``key=start:stop:num`` (or ``key=value`` for a single point)."""
        try:
            key, rng = text.split("=", 1)
            parts = [p for p in rng.split(":")]
            if len(parts) == 1:
                v = float(parts[0])
                return cls(key.strip(), v, v, 1)
            start, stop, num = parts
            return cls(key.strip(), float(start), float(stop), int(num))
        except ValueError as exc:
            raise ConfigError([(text, "axis must look like key=start:stop:num")]) from exc


def _check_axes(axes):
    problems = []
    if not 1 <= len(axes) <= 2:
        problems.append(("<axes>", f"need 1 or 2 axes, got {len(axes)}"))
    for axis in axes:
        if axis.key in POWER_AXES:
            pass
        elif axis.key not in SCHEMA:
            problems.append((axis.key, "unknown key"))
        elif SCHEMA[axis.key].kind not in (float, int):
            problems.append((axis.key, "not a numeric parameter"))
        if axis.num < 1:
            problems.append((axis.key, "num must be >= 1"))
    if len({a.key for a in axes}) != len(axes):
        problems.append(("<axes>", "axes must be distinct"))
    if problems:
        raise ConfigError(problems)


def _sweep_point(values, quantity, keys, point):
    overrides = {k: v for k, v in zip(keys, point) if k not in POWER_AXES}
    powers = dict(zip(keys, point))
    cfg = validate({**values, **{k: (int(v) if SCHEMA[k].kind is int else v)
                                 for k, v in overrides.items()}})
    physics = physics_from_config(cfg)
    pump = powers.get("pump_W", cfg["sweep.pump"])
    seed = powers.get("seed_W", cfg["sweep.seed"])
    if quantity == "amplification":
        return _amplification_point(physics, (pump, seed))
    if quantity == "contrast":
        return _contrast_point(physics, physics.magnet_field, (pump, seed))
    if quantity == "net_gain":
        return small_signal_gain(physics, pump)
    op = operating_point(physics, pump, seed)
    return {"transmitted": op.transmitted, "reflected": op.reflected,
            "finesse": op.finesse}[quantity]


def sweep(cfg, axes, quantity="amplification", out_dir=None, jobs=None):
    """Evaluate ``quantity`` on the grid spanned by ``axes``.

    Points may run in worker processes; results are assembled in grid
    order, so output bytes do not depend on ``jobs``.
    """
    axes = [Axis.parse(a) if isinstance(a, str) else a for a in axes]
    _check_axes(axes)
    if quantity not in SWEEP_QUANTITIES:
        raise ConfigError([("<quantity>", f"unknown quantity {quantity!r}")])
    started = time.perf_counter()
    record = load_calibration(cfg)
    values = calibrated_config(cfg, record).values
    keys = [a.key for a in axes]
    grids = [a.values for a in axes]
    points = list(itertools.product(*grids))
    vals = grid_map(partial(_sweep_point, values, quantity, keys), points,
                    jobs or cfg["run.jobs"])
    writer = ArtifactWriter(out_dir or cfg.output_dir)
    name = f"sweep_{quantity}.csv"
    if len(axes) == 1:
        writer.columns(name, {keys[0]: grids[0], "value": vals})
    else:
        writer.power_map(name, PowerMap(grids[0], grids[1], vals, quantity, tuple(keys)))
    arr = np.asarray(vals, dtype=float)
    k = int(np.nanargmax(arr))
    summary = {"quantity": quantity, "axes": [asdict(a) for a in axes],
               "max": float(arr[k]), "argmax": [float(x) for x in points[k]],
               "min": float(np.nanmin(arr))}
    writer.json(f"sweep_{quantity}_summary.json", summary)
    manifest = _finish(writer, "sweep", cfg, {"params": record["params"]}, started)
    return summary, manifest


__all__ = [
    "ArtifactWriter", "Axis", "CalibrationError", "RunManifest", "TARGETS", "calibrated_physics",
    "calibration_path", "load_calibration", "reproduce", "run_calibration", "sweep",
]
