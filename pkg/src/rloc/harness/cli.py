"""Command-line entry point: ``rloc run|sweep|flock|compare``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from ..engine import ConfigError
from .config import AXES, TrialConfig, load_config
from .output import write_comparison_csv, write_jsonl, write_mse_csv, write_sweep_plots
from .trial import InvariantViolation, SweepPoint, compare_algorithms, flock, run_single, sweep

log = logging.getLogger("rloc")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3


def _noise_value(config: TrialConfig, axis: str) -> float:
    noise = config.world.noise
    return noise.sigma_x if axis == "sigma_xy" else getattr(noise, axis)


def _parse_values(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"--values must be a comma-separated list of numbers: {text!r}") from exc
    if not values or any(v < 0 for v in values):
        raise ConfigError("--values must list at least one number >= 0")
    return values


def _load(args, path: str) -> TrialConfig:
    config = load_config(path)
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        changes["trials"] = args.trials
    if getattr(args, "workers", None) is not None:
        changes["workers"] = args.workers
    return replace(config, **changes) if changes else config


def _points(config: TrialConfig) -> list[SweepPoint]:
    if config.sweep is not None:
        return sweep(config, config.sweep.axis, config.sweep.values, cache={})
    axis = "sigma_d"
    return sweep(config, axis, [_noise_value(config, axis)])


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args) -> int:
    config = _load(args, args.config)
    out = _out_dir(args.out)
    points = _points(config)
    write_mse_csv(out / "mse.csv", points)
    write_jsonl(out / "trace.jsonl", run_single(config, 0, trace=True).trace)
    if config.sweep is not None:
        write_sweep_plots(out, points)
    for p in points:
        print(f"{p.axis}={p.value:g} mse_position={p.stats.mse_position:.6g} "
              f"mse_orientation={p.stats.mse_orientation:.6g} samples={p.stats.samples}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = _load(args, args.config)
    if args.axis not in AXES:
        raise ConfigError(f"--axis must be one of {AXES}")
    out = _out_dir(args.out)
    points = sweep(config, args.axis, _parse_values(args.values), cache={})
    write_mse_csv(out / "mse.csv", points)
    write_sweep_plots(out, points)
    for p in points:
        print(f"{p.axis}={p.value:g} mse_position={p.stats.mse_position:.6g} "
              f"mse_orientation={p.stats.mse_orientation:.6g} ambiguity={p.stats.ambiguity_rate:.3f}")
    return EXIT_OK


def cmd_flock(args) -> int:
    config = _load(args, args.config)
    out = _out_dir(args.out)
    variances = flock(config)
    with open(out / "flock.csv", "w") as fh:
        fh.write("trial,circular_variance\n")
        for i, v in enumerate(variances):
            fh.write(f"{i},{v!r}\n")
    converged = sum(v < args.threshold for v in variances)
    print(f"converged {converged}/{len(variances)} (final circular variance < {args.threshold:g})")
    return EXIT_OK


def cmd_compare(args) -> int:
    config_a = _load(args, args.config_a)
    config_b = _load(args, args.config_b)
    out = _out_dir(args.out)
    a, b = _points(config_a), _points(config_b)
    rows = compare_algorithms(a, b)
    write_mse_csv(out / "mse.csv", a + b)
    write_comparison_csv(out / "comparison.csv", rows)
    for r in rows:
        print(f"{r.axis_value:g}: position {r.mse_a[0]:.4g} vs {r.mse_b[0]:.4g} (ratio {r.ratio_position}), "
              f"orientation {r.mse_a[1]:.4g} vs {r.mse_b[1]:.4g} (ratio {r.ratio_orientation})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rloc", description="Relative localization experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="YAML config file")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--workers", type=int, help="worker processes for independent trials")
        p.add_argument("--out", default=".", help="output directory")

    p = sub.add_parser("run", help="run one config (and its sweep, if any)")
    common(p)
    p.add_argument("--trials", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="sweep one noise axis")
    common(p)
    p.add_argument("--axis", required=True, choices=AXES)
    p.add_argument("--values", required=True, help="comma-separated sigma values")
    p.add_argument("--trials", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("flock", help="flocking composed with the uncoordinated localizer")
    common(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--threshold", type=float, default=1e-3)
    p.set_defaults(func=cmd_flock)

    p = sub.add_parser("compare", help="side-by-side MSE of two configs")
    common(p, config=False)
    p.add_argument("--config-a", required=True)
    p.add_argument("--config-b", required=True)
    p.add_argument("--trials", type=int)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        log.info("running %s", args.command)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
