"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

from ..constrained import solve_lambda_star
from ..errors import ConfigError, NumericalError, ScheduleViolation, SensorGibbsError, UnknownPreset
from .config import ExperimentConfig, dump_toml, load_config, parse_override, validate
from .presets import PRESETS, preset
from .runner import SHELL_SWEEP, SWEEP, build_instance, format_table, resolve, run_experiment, sweep_beta, write_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _add_source(p: argparse.ArgumentParser, overrides: bool = True) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=sorted(PRESETS), help="named experiment setup")
    src.add_argument("--config", help="TOML config file")
    p.add_argument("--seed", type=int, help="experiment seed (overrides the config)")
    if overrides:
        p.add_argument(
            "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
            help="override a config key, e.g. params.beta=5 (repeatable)",
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sensorgibbs", description="Gibbs-sampling sensor subset selection")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run an experiment and write CSVs")
    _add_source(sim)
    sim.add_argument("--out", help="output directory (overrides output.dir)")
    sim.add_argument("--workers", type=int, help="processes for parallel replications")
    sim.add_argument("--quiet", action="store_true", help="do not print the summary table")

    sw = sub.add_parser("sweep-beta", help="per-beta comparison table")
    _add_source(sw)
    sw.add_argument("--betas", required=True, help="comma-separated inverse temperatures")
    sw.add_argument("--out", help="output directory (overrides output.dir)")

    orc = sub.add_parser("oracle", help="exact reference quantities")
    orc_sub = orc.add_subparsers(dest="oracle", required=True)
    ls = orc_sub.add_parser("lambda-star", help="multiplier whose Gibbs mean weight equals nbar")
    _add_source(ls)
    ls.add_argument("--tol", type=float, default=1e-10)

    val = sub.add_parser("validate", help="check a configuration without running it")
    _add_source(val)
    val.add_argument("--print", dest="show", action="store_true", help="print the resolved config as TOML")
    return parser


def _load(args) -> ExperimentConfig:
    if args.preset:
        cfg = preset(args.preset)
    else:
        cfg = load_config(args.config)
    overrides = dict(parse_override(item) for item in getattr(args, "overrides", []))
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "out", None):
        overrides["output.dir"] = args.out
    if overrides:
        cfg = cfg.with_overrides(overrides)
    return validate(cfg)


def _simulate(args) -> int:
    cfg = _load(args)
    run_experiment(cfg, workers=args.workers, echo=not args.quiet)
    return EXIT_OK


def _sweep(args) -> int:
    cfg = _load(args)
    try:
        betas = tuple(float(b) for b in args.betas.split(",") if b.strip())
    except ValueError:
        raise ConfigError("--betas", f"not a comma-separated list of numbers: {args.betas!r}") from None
    if not betas or any(b < 0 for b in betas):
        raise ConfigError("--betas", "need at least one nonnegative beta")
    rows = sweep_beta(cfg, betas)
    cols = SHELL_SWEEP if cfg.algorithm == "hard-shell" else SWEEP
    out = Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "sweep.csv", cols, rows)
    print(format_table(rows))
    return EXIT_OK


def _lambda_star(args) -> int:
    cfg = _load(args)
    inst = build_instance(cfg)
    res = resolve(cfg, inst)
    nbar = res.nbar
    if nbar is None:
        raise ConfigError("params.nbar", "set nbar (or lambda_target) to solve for the multiplier")
    ls = solve_lambda_star(inst.energy, cfg.params.beta, nbar, inst.n, tol=args.tol)
    print(f"lambda_star = {ls.value:.17g}")
    print(f"mean_weight = {ls.mean_weight:.17g}")
    print(f"nbar        = {nbar:.17g}")
    return EXIT_OK


def _validate(args) -> int:
    cfg = _load(args)
    resolve(cfg, build_instance(cfg))
    if args.show:
        sys.stdout.write(dump_toml(cfg))
    else:
        print("ok")
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handler = {
        "simulate": _simulate,
        "sweep-beta": _sweep,
        "oracle": _lambda_star,
        "validate": _validate,
    }[args.command]
    try:
        return handler(args)
    except (ConfigError, UnknownPreset, ScheduleViolation) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (SensorGibbsError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
