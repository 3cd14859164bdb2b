"""Command-line entry point: one subcommand per experiment.

Exit codes: 0 success, 1 invalid configuration, 2 runtime failure.
"""

import argparse
import json
import logging
import sys

from .experiments import EXPERIMENTS, ExperimentConfig, run_experiment

# flag name -> config field
_FLAGS = {
    "n_models": int,
    "n_runs_per_model": int,
    "dimension": int,
    "segments": int,
    "horizon": float,
    "ratio": float,
    "success_threshold": float,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qclandscape", description="Run seeded control-landscape experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name.replace('_', ' ')} experiment")
        p.add_argument("--config", help="INI file; the section named after the experiment is used")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", dest="output_path", help="output directory")
        p.add_argument("--threads", type=int)
        p.add_argument("--polarizability", choices=("on", "off"))
        for flag, kind in _FLAGS.items():
            p.add_argument("--" + flag.replace("_", "-"), dest=flag, type=kind)
        p.add_argument(
            "--set", action="append", default=[], metavar="KEY=VALUE",
            help="override any other config field",
        )
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value.strip()
    for key in ("seed", "output_path", "threads", "polarizability", *_FLAGS):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
        return ExperimentConfig.from_ini(text, args.experiment, **overrides)
    return ExperimentConfig.from_dict({"experiment": args.experiment, **overrides})


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = config_from_args(args)
    except (OSError, ValueError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 1
    try:
        table = run_experiment(cfg)
        table.write(cfg.output_path, cfg)
    except Exception as exc:  # noqa: BLE001 - reported through the exit code
        print(f"run failed: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(table.summary, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
