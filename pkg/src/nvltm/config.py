"""Experiment configuration: a flat table of dotted keys loaded from TOML.

Every key has a default, a type and a range check. Files may set any
subset of keys using TOML sections (``[cavity]`` then
``mirror_reflectivity = 0.9998`` is ``cavity.mirror_reflectivity``).
Environment variables ``NVLTM_<SECTION>__<KEY>`` override file values,
e.g. ``NVLTM_CAVITY__BASE_FINESSE=958``; values are parsed as TOML
literals.
"""

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import cavity as cav
from . import spin_model as sm
from .errors import ConfigError
from .physics import OdmrDrive, Physics

ENV_PREFIX = "NVLTM_"
DEFAULTS_RESOURCE = "defaults.toml"


def _positive(v):
    return None if v > 0 else "must be > 0"


def _nonneg(v):
    return None if v >= 0 else "must be >= 0"


def _fraction(v):
    return None if 0 <= v <= 1 else "must lie in [0, 1]"


def _open_fraction(v):
    return None if 0 < v < 1 else "must lie in (0, 1)"


def _index(v):
    return None if v >= 1 else "must be >= 1"


def _bounds(v):
    if len(v) != 2:
        return "must be a [low, high] pair"
    return None if v[0] >= 0 else "lower bound must be >= 0"


@dataclass(frozen=True)
class Key:
    default: object
    kind: type = float
    check: object = None
    optional: bool = False


# (key, default, kind, check); physical values in SI units
SCHEMA = {
    "run.rng_seed": Key(0, int, _nonneg),
    "run.output_dir": Key("out", str),
    "run.target": Key("", str),
    "run.jobs": Key(1, int, _positive),
    "run.calibration_file": Key("", str),

    "spin.radiative_decay": Key(6.5e7, float, _nonneg),
    "spin.isc_e0": Key(8e6, float, _nonneg),
    "spin.isc_e1": Key(5e7, float, _nonneg),
    "spin.singlet_decay": Key(3.3e6, float, _nonneg),
    "spin.singlet_branch_g0": Key(0.6, float, _fraction),
    "spin.mix_ground": Key(200.0, float, _nonneg),
    "spin.mix_excited": Key(0.0, float, _nonneg),

    "medium.nv_density": Key(3.2e23, float, _nonneg),
    "medium.stim_cross_section": Key(1e-21, float, _nonneg),
    "medium.intrinsic_absorption": Key(1.0, float, _nonneg),
    "medium.induced_absorption_coeff": Key(0.0, float, _nonneg),

    "cavity.mirror_roc": Key(30e-3, float, _positive),
    "cavity.geometric_length": Key(12e-3, float, _positive),
    "cavity.mirror_reflectivity": Key(0.9998, float, _open_fraction),
    "cavity.mirror_transmission": Key(None, float, _fraction, optional=True),
    "cavity.diamond_thickness": Key(295e-6, float, _nonneg),
    "cavity.diamond_index": Key(2.41, float, _index),
    "cavity.seed_wavelength": Key(710e-9, float, _positive),
    "cavity.base_finesse": Key(1144.0, float, _positive),
    "cavity.birefringence_reflectance": Key(1.44e-3, float, _fraction),
    "cavity.mode_matching": Key(0.3, float, _fraction),

    "pump.waist": Key(55.5e-6, float, _positive),
    "pump.cross_section": Key(3e-21, float, _nonneg),

    "magnet.field": Key(0.182, float, _nonneg),
    "magnet.angle_deg": Key(109.5, float, _nonneg),
    "magnet.mix_rate_max": Key(1e7, float, _nonneg),

    "pl.background": Key(0.0, float, _nonneg),
    "pl.scale": Key(1e-12, float, _positive),

    "odmr.cavity.rate": Key(2e6, float, _nonneg),
    "odmr.cavity.linewidth": Key(4e6, float, _positive),
    "odmr.cavity.spread": Key(0.3, float, _nonneg),
    "odmr.cavity.splitting": Key(9e6, float, _nonneg),
    "odmr.pl.rate": Key(2e6, float, _nonneg),
    "odmr.pl.linewidth": Key(4e6, float, _positive),
    "odmr.pl.spread": Key(0.3, float, _nonneg),
    "odmr.pl.splitting": Key(9e6, float, _nonneg),

    "scan.amplitude": Key(3e-6, float, _positive),
    "scan.frequency": Key(111.0, float, _positive),
    "scan.samples": Key(100_000, int, lambda v: None if v >= 100 else "must be >= 100"),
    "scan.detector_nep": Key(1e-11, float, _nonneg),
    "scan.shot_noise": Key(True, bool),

    "targets.peak_gain": Key(2.04, float, _positive),
    "targets.peak_pump": Key(1.0, float, _positive),
    "targets.zero_pump": Key(3.0, float, _positive),
    "targets.max_contrast": Key(0.326, float, _open_fraction),
    "targets.contrast_seed": Key(0.01, float, _positive),
    "targets.pl_contrast": Key(0.1591, float, _open_fraction),
    "targets.odmr_cavity_contrast": Key(0.136, float, _open_fraction),
    "targets.odmr_cavity_width": Key(4.46e6, float, _positive),
    "targets.odmr_cavity_overall": Key(0.174, float, _open_fraction),
    "targets.odmr_pl_contrast": Key(0.089, float, _open_fraction),
    "targets.odmr_pl_width": Key(5.63e6, float, _positive),
    "targets.odmr_pl_overall": Key(0.114, float, _open_fraction),
    "targets.sensitivity_pl": Key(135.5e-12, float, _positive),
    "targets.sensitivity_cavity": Key(14.6e-12, float, _positive),

    "bounds.stim_cross_section": Key([0.0, math.inf], list, _bounds),
    "bounds.pump_cross_section": Key([0.0, math.inf], list, _bounds),
    "bounds.induced_absorption_coeff": Key([0.0, math.inf], list, _bounds),
    "bounds.mix_rate_max": Key([0.0, math.inf], list, _bounds),

    "maps.pump_min": Key(0.2, float, _nonneg),
    "maps.pump_max": Key(6.0, float, _nonneg),
    "maps.pump_points": Key(30, int, _positive),
    "maps.seed_min": Key(0.01, float, _positive),
    "maps.seed_max": Key(0.65, float, _positive),
    "maps.seed_points": Key(30, int, _positive),

    "fig2a.base_finesse": Key(710.0, float, _positive),
    "fig2a.pump": Key(1.0, float, _nonneg),
    "fig2a.seed": Key(7.7e-3, float, _positive),
    "fig2b.pump_max": Key(6.0, float, _positive),
    "fig2b.points": Key(61, int, _positive),
    "fig2b.seed": Key(7.7e-3, float, _positive),
    "fig3a.base_finesse": Key(958.0, float, _positive),
    "fig3a.pumped_finesse": Key(1086.0, float, _positive),
    "fig3a.seed": Key(0.3, float, _positive),
    "fig3c.pump": Key(3.4, float, _nonneg),
    "fig3c.seed": Key(0.025, float, _positive),
    "fig3c.duration": Key(90.0, float, _positive),
    "fig3c.magnet_on": Key(30.0, float, _nonneg),
    "fig3c.magnet_off": Key(60.0, float, _nonneg),
    "fig3c.sample_rate": Key(10.0, float, _positive),
    "fig3c.noise": Key(0.005, float, _nonneg),
    "fig3d.seed": Key(1.14, float, _positive),
    "fig3d.pump_max": Key(6.0, float, _positive),
    "fig3d.points": Key(61, int, _positive),
    "fig4.pump": Key(2.78, float, _nonneg),
    "fig4.seed": Key(1.51e-3, float, _positive),
    "fig4.span": Key(40e6, float, _positive),
    "fig4.points": Key(201, int, lambda v: None if v >= 21 else "must be >= 21"),
    "fig4.noise_cavity": Key(0.001, float, _nonneg),
    "fig4.noise_pl": Key(0.0004, float, _nonneg),
    "fig4b.seed": Key(1.0, float, _positive),

    "sweep.pump": Key(1.0, float, _nonneg),
    "sweep.seed": Key(0.01, float, _positive),
}


def _flatten(tree, prefix=""):
    flat = {}
    for k, v in tree.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            flat.update(_flatten(v, key + "."))
        else:
            flat[key] = v
    return flat


def _coerce(key, value):
    """Return (value, problem) for one entry, checking type and range."""
    spec = SCHEMA[key]
    kind = spec.kind
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return None, f"expected a number, got {value!r}"
        value = float(value)
        if not math.isfinite(value):
            return None, f"must be finite, got {value!r}"
    elif kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            return None, f"expected an integer, got {value!r}"
    elif kind is bool:
        if not isinstance(value, bool):
            return None, f"expected true/false, got {value!r}"
    elif kind is str:
        if not isinstance(value, str):
            return None, f"expected a string, got {value!r}"
    elif kind is list:
        if (not isinstance(value, list)
                or not all(isinstance(x, (int, float)) and not isinstance(x, bool)
                           for x in value)):
            return None, f"expected a list of numbers, got {value!r}"
        value = [float(x) for x in value]
    if spec.check is not None:
        problem = spec.check(value)
        if problem:
            return None, f"{problem}, got {value!r}"
    return value, None


def _parse_env_value(raw):
    try:
        return tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        return raw


def env_overrides(environ=None):
    """Dotted-key overrides from ``NVLTM_SECTION__KEY`` variables."""
    environ = os.environ if environ is None else environ
    out = {}
    for name, raw in environ.items():
        if name.startswith(ENV_PREFIX):
            key = name[len(ENV_PREFIX):].lower().replace("__", ".")
            out[key] = _parse_env_value(raw)
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict = field(default_factory=dict)
    source: str = "<defaults>"

    def __getitem__(self, key):
        return self.values[key]

    @property
    def rng_seed(self):
        return self.values["run.rng_seed"]

    @property
    def output_dir(self):
        return Path(self.values["run.output_dir"])

    @property
    def target(self):
        return self.values["run.target"]

    def with_overrides(self, overrides, origin="<override>"):
        return validate({**self.values, **overrides}, origin)

    def snapshot(self):
        """JSON-ready copy (infinite bounds written as strings)."""
        def enc(v):
            if isinstance(v, float) and not math.isfinite(v):
                return repr(v)
            if isinstance(v, list):
                return [enc(x) for x in v]
            return v
        return {k: enc(v) for k, v in sorted(self.values.items())}

    def digest(self):
        blob = json.dumps(self.snapshot(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def validate(values, origin="<config>"):
    """Check every entry and every cross-key invariant; report all problems."""
    problems = []
    merged = {k: spec.default for k, spec in SCHEMA.items()}
    for key, value in values.items():
        if key not in SCHEMA:
            problems.append((key, "unknown key"))
            continue
        if value is None and SCHEMA[key].optional:
            merged[key] = None
            continue
        coerced, problem = _coerce(key, value)
        if problem:
            problems.append((key, problem))
        else:
            merged[key] = coerced
    if not problems:
        problems.extend(_cross_checks(merged))
    if problems:
        raise ConfigError(problems, origin)
    return ExperimentConfig(merged, origin)


def _cross_checks(v):
    problems = []
    r, t = v["cavity.mirror_reflectivity"], v["cavity.mirror_transmission"]
    if t is not None and r + t > 1:
        problems.append(("cavity.mirror_transmission",
                         f"R + T = {r + t!r} exceeds 1"))
    if not v["cavity.geometric_length"] < 2 * v["cavity.mirror_roc"]:
        problems.append(("cavity.geometric_length",
                         "resonator unstable: need 0 < L < 2 ROC"))
    for axis in ("pump", "seed"):
        if v[f"maps.{axis}_max"] < v[f"maps.{axis}_min"]:
            problems.append((f"maps.{axis}_max", f"below maps.{axis}_min"))
    if not v["fig3c.magnet_on"] < v["fig3c.magnet_off"] <= v["fig3c.duration"]:
        problems.append(("fig3c.magnet_off",
                         "need magnet_on < magnet_off <= duration"))
    for key in ("stim_cross_section", "pump_cross_section",
                "induced_absorption_coeff", "mix_rate_max"):
        lo, hi = v[f"bounds.{key}"]
        if hi < lo:
            problems.append((f"bounds.{key}", f"empty range [{lo}, {hi}]"))
    return problems


def defaults_text():
    return resources.files("nvltm.resources").joinpath(DEFAULTS_RESOURCE).read_text()


def default_config_path():
    return Path(str(resources.files("nvltm.resources").joinpath(DEFAULTS_RESOURCE)))


def load_config(path=None, environ=None):
    """Load and validate a TOML config; ``None`` loads the shipped defaults.

    Environment overrides are applied on top of the file.
    """
    if path is None:
        text, origin = defaults_text(), DEFAULTS_RESOURCE
    else:
        path = Path(path)
        if not path.is_file():
            raise ConfigError([("<file>", f"not found: {path}")], str(path))
        text, origin = path.read_text(), str(path)
    try:
        tree = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([("<parse>", str(exc))], origin) from exc
    values = _flatten(tree)
    values.update(env_overrides(environ))
    return validate(values, origin)


def _drive(v, channel):
    p = f"odmr.{channel}."
    return OdmrDrive(rate=v[p + "rate"], linewidth=v[p + "linewidth"],
                     spread=v[p + "spread"], splitting=v[p + "splitting"])


def physics_from_config(cfg):
    v = cfg.values if isinstance(cfg, ExperimentConfig) else cfg
    rates = sm.NvRates(radiative_decay=v["spin.radiative_decay"], isc_e0=v["spin.isc_e0"],
                       isc_e1=v["spin.isc_e1"], singlet_decay=v["spin.singlet_decay"],
                       singlet_branch_g0=v["spin.singlet_branch_g0"],
                       mix_ground=v["spin.mix_ground"], mix_excited=v["spin.mix_excited"])
    medium = sm.GainMediumParams(
        nv_density=v["medium.nv_density"],
        stim_cross_section=v["medium.stim_cross_section"],
        medium_thickness=v["cavity.diamond_thickness"],
        intrinsic_absorption=v["medium.intrinsic_absorption"],
        induced_absorption_coeff=v["medium.induced_absorption_coeff"])
    geometry = cav.CavityGeometry(
        mirror_roc=v["cavity.mirror_roc"], geometric_length=v["cavity.geometric_length"],
        mirror_reflectivity=v["cavity.mirror_reflectivity"],
        mirror_transmission=v["cavity.mirror_transmission"],
        diamond_thickness=v["cavity.diamond_thickness"],
        diamond_index=v["cavity.diamond_index"],
        seed_wavelength=v["cavity.seed_wavelength"])
    return Physics(rates=rates, medium=medium, geometry=geometry,
                   base_finesse=v["cavity.base_finesse"], pump_waist=v["pump.waist"],
                   pump_cross_section=v["pump.cross_section"],
                   birefringence_reflectance=v["cavity.birefringence_reflectance"],
                   mode_matching=v["cavity.mode_matching"], magnet_field=v["magnet.field"],
                   tetrahedral_angle=float(np.deg2rad(v["magnet.angle_deg"])),
                   mix_rate_max=v["magnet.mix_rate_max"],
                   pl_background=v["pl.background"], pl_scale=v["pl.scale"],
                   odmr_cavity=_drive(v, "cavity"), odmr_pl=_drive(v, "pl"))


def physics_to_values(physics):
    """Config entries describing ``physics`` (inverse of physics_from_config)."""
    out = {
        "medium.stim_cross_section": physics.medium.stim_cross_section,
        "medium.induced_absorption_coeff": physics.medium.induced_absorption_coeff,
        "pump.cross_section": physics.pump_cross_section,
        "magnet.mix_rate_max": physics.mix_rate_max,
        "pl.background": physics.pl_background,
        "pl.scale": physics.pl_scale,
    }
    for channel in ("cavity", "pl"):
        drive = physics.odmr_cavity if channel == "cavity" else physics.odmr_pl
        for name in ("rate", "linewidth", "spread", "splitting"):
            out[f"odmr.{channel}.{name}"] = getattr(drive, name)
    return {k: float(v) for k, v in out.items()}
