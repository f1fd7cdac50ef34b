"""Command line entry point: ``atommem <experiment> [options]``."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import harness
from .channel import MemoryConfig, load_config, save_config

EXIT_CODES = {"usage": 2, "config": 3, "spec": 4, "io": 5, "calibration": 6}


def parse_times(text: str) -> tuple[float, ...]:
    """``"0,2,10"`` or ``"start:stop:step"`` (stop inclusive)."""
    text = text.strip()
    if ":" in text:
        parts = [float(x) for x in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise argparse.ArgumentTypeError("range must be start:stop:step with step > 0")
        start, stop, step = parts
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return tuple(float(start + i * step) for i in range(max(n, 0)))
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse time list {text!r}") from None


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="memory config file (key = value lines)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=10000, help="trials per (input, time) point")
    p.add_argument("--times", type=parse_times, default=(), help="storage times in us")
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--guided", action="store_true", help="apply the guiding field")
    p.add_argument("--guide-field", type=float, default=harness.GUIDE_FIELD,
                   help="guiding field in gauss")
    p.add_argument("--compensate", action="store_true",
                   help="undo the known Larmor rotation in the analysis")
    p.add_argument("--n-bar", type=float, default=1.0, help="mean input photon number")
    p.add_argument("--no-stray", action="store_true", help="disable stray/dark clicks")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="atommem", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in harness.EXPERIMENTS:
        _common(sub.add_parser(name, help=f"run the {name} experiment"))
    cal = sub.add_parser("calibrate", help="fit noise amplitudes to storage-time targets")
    cal.add_argument("--config", help="base config (non-noise parameters)")
    cal.add_argument("--t-cross", type=float, default=82.0)
    cal.add_argument("--mean-f-2us", type=float, default=0.927)
    cal.add_argument("--t-cross-guided", type=float, default=184.0,
                     help="guided crossing target; <= 0 disables it")
    cal.add_argument("--guide-field", type=float, default=harness.GUIDE_FIELD)
    cal.add_argument("--out", default="calibrated.cfg", help="config file to write")
    return parser


def _fail(category: str, message: str) -> int:
    print(json.dumps({"error": category, "message": message}), file=sys.stderr)
    return EXIT_CODES.get(category, 1)


def _calibrate(args) -> int:
    try:
        base = load_config(args.config) if args.config else MemoryConfig()
    except OSError as exc:
        return _fail("config", str(exc))
    except ValueError as exc:
        return _fail("config", str(exc))
    targets = harness.CalibrationTargets(
        t_cross_unguided=args.t_cross, mean_f_2us=args.mean_f_2us,
        t_cross_guided=args.t_cross_guided if args.t_cross_guided > 0 else None,
        guide_field=args.guide_field)
    try:
        result = harness.calibrate(targets, base)
    except ValueError as exc:
        return _fail("calibration", str(exc))
    try:
        save_config(result.config, args.out)
    except OSError as exc:
        return _fail("io", str(exc))
    print(json.dumps({"config": args.out, "sigma_b_long": result.config.sigma_b_long,
                      "sigma_b_trans": result.config.sigma_b_trans,
                      "t_cross_unguided": result.t_cross_unguided,
                      "mean_f_2us": result.mean_f_2us,
                      "t_cross_guided": result.t_cross_guided}, indent=2))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "calibrate":
        return _calibrate(args)
    try:
        spec = harness.ExperimentSpec(
            experiment=args.command, config=args.config, seed=args.seed, trials=args.trials,
            times=args.times, out=args.out, guided=args.guided, compensate=args.compensate,
            guide_field=args.guide_field, n_bar=args.n_bar, stray=not args.no_stray)
        summary = harness.run(spec)
    except harness.HarnessError as exc:
        return _fail(exc.category, str(exc))
    print(json.dumps(harness._clean(summary), indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
