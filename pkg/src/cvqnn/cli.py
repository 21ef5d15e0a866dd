"""Command-line entry point: ``cvqnn <experiment> [--config FILE] [--seed N] [--out-dir DIR]``."""
from __future__ import annotations

import argparse
import sys

from .errors import ConfigError, CVQNNError
from .experiments import EXPERIMENTS, ExperimentConfig, parse_config_text, run

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cvqnn", description=__doc__)
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat 'key = value' file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir", dest="out_dir")
    return parser


def load_config(experiment: str, path=None, seed=None, out_dir=None) -> ExperimentConfig:
    values = {}
    if path:
        try:
            with open(path) as fh:
                values = parse_config_text(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    if values.get("experiment", experiment) != experiment:
        raise ConfigError(f"config is for {values['experiment']!r}, command is {experiment!r}")
    values["experiment"] = experiment
    if seed is not None:
        values["seed"] = seed
    if out_dir is not None:
        values["out_dir"] = out_dir
    return ExperimentConfig.from_mapping(values)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.experiment, args.config, args.seed, args.out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        metrics, _ = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CVQNNError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for key, value in metrics.items():
        print(f"{key} = {value}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
