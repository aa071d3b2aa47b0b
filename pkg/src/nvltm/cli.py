"""Command-line entry point ``nvltm``.

Exit codes: 0 success, 2 invalid input or config, 3 a fit or calibration
did not converge, 4 calibration missing.
"""

import argparse
import sys
from pathlib import Path

from . import __version__
from .analysis import finesse_from_trace, fit_double_lorentzian, shot_noise_sensitivity
from .config import ENV_PREFIX, load_config
from .data import file_sha256, read_spectrum, read_trace
from .errors import (
    CalibrationError,
    ConfigError,
    DegenerateFitError,
    FitFailure,
    InsufficientPeaksError,
    MissingCalibrationError,
)
from .harness import TARGETS, ArtifactWriter, dumps, reproduce, run_calibration, sweep

EXIT_OK, EXIT_INVALID, EXIT_CONVERGENCE, EXIT_NO_CALIBRATION = 0, 2, 3, 4


def _common(parser, default=None):
    # flags may come before or after the subcommand; the subcommand copy
    # must not overwrite a value given before it
    parser.add_argument("--config", type=Path, default=default,
                        help="TOML config (default: shipped defaults)")
    parser.add_argument("--seed", type=int, default=default, help="RNG seed (u64)")
    parser.add_argument("--out", type=Path, default=default, help="output directory")
    parser.add_argument("--jobs", type=int, default=default, help="worker processes")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    _common(common, argparse.SUPPRESS)
    parser = argparse.ArgumentParser(
        prog="nvltm",
        description="NV laser-threshold magnetometry simulator and analysis.",
        epilog=f"Any config key can be overridden with {ENV_PREFIX}<SECTION>__<KEY>.")
    _common(parser)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("calibrate", parents=[common], help="fit the phenomenological model")

    p = sub.add_parser("reproduce", parents=[common], help="write one figure's dataset")
    p.add_argument("target", choices=(*TARGETS, "all"))

    p = sub.add_parser("sweep", parents=[common], help="evaluate a 1D or 2D parameter grid")
    p.add_argument("--axis", action="append", required=True, metavar="KEY=START:STOP:NUM",
                   help="pump_W, seed_W or a numeric config key; give once or twice")
    p.add_argument("--quantity", default="amplification",
                   choices=("amplification", "contrast", "transmitted", "reflected",
                            "net_gain", "finesse"))

    p = sub.add_parser("fit", parents=[common], help="finesse of a scanned-cavity trace")
    p.add_argument("trace", type=Path)
    p.add_argument("--column", default="power_W", help="power column to fit")
    p.add_argument("--min-prominence", type=float, default=0.3)

    p = sub.add_parser("odmr-fit", parents=[common], help="double-Lorentzian ODMR fit")
    p.add_argument("spectrum", type=Path)
    p.add_argument("--channel", choices=("cavity", "pl"), default="cavity")

    p = sub.add_parser("sensitivity", parents=[common],
                       help="shot-noise-limited sensitivity (calibrated model or given line)")
    p.add_argument("--width", type=float, help="ODMR FWHM in Hz")
    p.add_argument("--contrast", type=float, help="ODMR dip contrast")
    p.add_argument("--power", type=float, help="detected power in W")
    p.add_argument("--wavelength", type=float, default=710e-9)
    return parser


def _config(args):
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError([("--seed", "must be an unsigned 64-bit integer")])
        overrides["run.rng_seed"] = args.seed
    if args.out is not None:
        overrides["run.output_dir"] = str(args.out)
    if args.jobs is not None:
        overrides["run.jobs"] = args.jobs
    return cfg.with_overrides(overrides, cfg.source) if overrides else cfg


def _provenance(cfg, path):
    return {"input": str(path), "input_sha256": file_sha256(path),
            "config_sha256": cfg.digest(), "tool_version": __version__}


def _require_file(path):
    if not Path(path).is_file():
        raise ConfigError([(str(path), "input file not found")])


def _run(args, out):
    cfg = _config(args)
    if args.command == "calibrate":
        record = run_calibration(cfg)
        out.write(dumps({"params": record["params"], "gain": record["gain"]["report"]}))
    elif args.command == "reproduce":
        targets = TARGETS if args.target == "all" else (args.target,)
        for target in targets:
            summary, _ = reproduce(target, cfg)
            out.write(dumps({target: summary}))
    elif args.command == "sweep":
        summary, _ = sweep(cfg, args.axis, args.quantity)
        out.write(dumps(summary))
    elif args.command == "fit":
        _require_file(args.trace)
        result = finesse_from_trace(read_trace(args.trace, column=args.column),
                                    args.min_prominence)
        record = {"result": result.to_dict(), "column": args.column,
                  "provenance": _provenance(cfg, args.trace)}
        ArtifactWriter(cfg.output_dir).json(f"{args.trace.stem}_fit.json", record)
        out.write(dumps(record))
    elif args.command == "odmr-fit":
        _require_file(args.spectrum)
        spectrum = read_spectrum(args.spectrum, args.channel)
        try:
            fit, note = fit_double_lorentzian(spectrum), None
        except DegenerateFitError as exc:
            fit, note = exc.fallback, str(exc)
        record = {"result": fit.to_dict(), "deepest": vars(fit.deepest),
                  "single_dip_fallback": note, "provenance": _provenance(cfg, args.spectrum)}
        ArtifactWriter(cfg.output_dir).json(f"{args.spectrum.stem}_odmr_fit.json", record)
        out.write(dumps(record))
    elif args.command == "sensitivity":
        given = (args.width, args.contrast, args.power)
        if all(v is not None for v in given):
            eta = shot_noise_sensitivity(args.width, args.contrast, args.power, args.wavelength)
            out.write(dumps({"eta_T_rtHz": eta}))
        elif any(v is not None for v in given):
            raise ConfigError([("sensitivity", "give all of --width, --contrast, --power "
                                               "or none")])
        else:
            summary, _ = reproduce("fig4b", cfg)
            out.write(dumps({k: summary[k] for k in
                             ("eta_pl_T_rtHz", "eta_cavity_T_rtHz", "ratio")}))
    return EXIT_OK


def main(argv=None, out=None):
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        return _run(args, out)
    except MissingCalibrationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CALIBRATION
    except (CalibrationError, FitFailure, InsufficientPeaksError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        residuals = getattr(exc, "residuals", None) or getattr(exc, "diagnostics", None)
        if residuals:
            print(dumps(residuals), file=sys.stderr)
        return EXIT_CONVERGENCE
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
