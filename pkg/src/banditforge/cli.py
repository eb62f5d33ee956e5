"""``banditforge`` command line: run, scale, check, report."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import experiment, serialise
from .config import PRESETS, ConfigError, ExperimentConfig, load_config, parse_config

WORKERS_ENV = "BANDITFORGE_WORKERS"


def _workers(arg: int | None, config: ExperimentConfig | None) -> int:
    if arg is not None:
        return arg
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise SystemExit(f"{WORKERS_ENV} must be an integer, got {env!r}")
    return config.workers if config is not None else 1


def _load(args) -> ExperimentConfig:
    if args.config and args.preset:
        raise SystemExit("give either --config or --preset, not both")
    if args.preset:
        config = parse_config(PRESETS[args.preset])
    elif args.config:
        config = load_config(args.config)
    else:
        raise SystemExit("one of --config or --preset is required")
    if args.seed is not None:
        # theta_norm instances are drawn from the master seed, so re-parse
        config = parse_config(_with_seed(config.source, args.seed))
    return config


def _with_seed(text: str, seed: int) -> str:
    lines, seen, in_exp = [], False, False
    for line in text.splitlines():
        stripped = line.strip()
        if stripped.startswith("["):
            if in_exp and not seen:
                lines.append(f"master_seed = {seed}")
                seen = True
            in_exp = stripped == "[experiment]"
        elif in_exp and stripped.split("=")[0].strip() == "master_seed":
            line, seen = f"master_seed = {seed}", True
        lines.append(line)
    if in_exp and not seen:
        lines.append(f"master_seed = {seed}")
    return "\n".join(lines) + "\n"


def _out(args, config: ExperimentConfig | None, default: str) -> Path:
    if args.out:
        return Path(args.out)
    if config is not None and config.output:
        return Path(config.output)
    return Path(default)


def _config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="experiment INI file")
    p.add_argument("--preset", choices=sorted(PRESETS), help="named scenario")
    p.add_argument("--seed", type=int, metavar="U64", help="override master_seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="banditforge", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment")
    _config_args(run)
    run.add_argument("--out", metavar="DIR")
    run.add_argument("--workers", type=int, metavar="N")
    run.add_argument("--diagnostics", action="store_true",
                     help="estimate the probability of optimism at every step")
    run.add_argument("--no-figures", action="store_true")

    scale = sub.add_parser("scale", help="regret exponents in n and d")
    _config_args(scale)
    scale.add_argument("--out", metavar="DIR")
    scale.add_argument("--workers", type=int, metavar="N")
    scale.add_argument("--dims", default="2,4,8,16")
    scale.add_argument("--dim-horizon", type=int, default=4096)
    scale.add_argument("--dim-trials", type=int, default=50)

    check = sub.add_parser("check", help="moment audits, lemma validators, convexity probes")
    check.add_argument("--out", metavar="DIR")
    check.add_argument("--seed", type=int, default=0, metavar="U64")
    check.add_argument("--trials", type=int, default=10_000)
    check.add_argument("--pairs", type=int, default=10_000)

    report = sub.add_parser("report", help="fits and figures from stored traces")
    report.add_argument("--out", metavar="DIR", required=True)
    report.add_argument("--checkpoints", help="comma-separated horizons")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            config = _load(args)
            out = _out(args, config, "results")
            status = experiment.run_experiment(
                config, out, workers=_workers(args.workers, config),
                diagnostics=args.diagnostics or config.diagnostics,
                figures=not args.no_figures)
            print(f"wrote {out}")
            return status

        if args.command == "scale":
            config = _load(args)
            out = _out(args, config, "results")
            dims = [int(v) for v in args.dims.split(",")]
            res = experiment.run_scale(config, out, dims, args.dim_horizon, args.dim_trials,
                                       _workers(args.workers, config))
            print(f"slope in n: {res['n_fit']['slope']:.3f}")
            print(f"exponent in d: {res['d_fit']['exponent']:.3f}")
            return 0

        if args.command == "check":
            checks = experiment.run_checks(seed=args.seed, validator_trials=args.trials,
                                           pairs=args.pairs)
            for name, c in checks.items():
                print(f"{'PASS' if c['passed'] else 'FAIL'}  {name}")
            if args.out:
                serialise.atomic_write(Path(args.out) / "check.json",
                                       serialise.summary_text(checks))
            return 0 if all(c["passed"] for c in checks.values()) else 1

        cps = [int(v) for v in args.checkpoints.split(",")] if args.checkpoints else None
        report = experiment.run_report(args.out, cps)
        for name, entry in report["agents"].items():
            slope = entry.get("slope", {}).get("slope")
            tail = f"  slope {slope:.3f}" if slope is not None else ""
            print(f"{name}: mean regret {entry.get('mean_regret', 0.0):.3f}{tail}")
        return 0
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
