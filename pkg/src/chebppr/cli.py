"""Command-line entry point: ``chebppr {solve,update,exp1,exp2,exp3,exp4}``."""
from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, NumericalError
from .experiments import (
    ExperimentConfig,
    run_exp1,
    run_exp2,
    run_exp3,
    run_exp4,
    run_solve,
    run_update,
    write_csv,
)
from .graph import GraphError
from .operators import KINDS
from .temporal import StreamFormatError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    """Argument parser that reports problems as :class:`ConfigError`."""

    def error(self, message):
        raise ConfigError(message)


def _window(text: str) -> tuple[int, int]:
    try:
        i, j = (int(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected I:J with integers, got {text!r}") from None
    return i, j


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="file of key=value lines mirroring the flags")
    src = p.add_argument_group("input")
    src.add_argument("--input", help="edge-stream file: 'src dst [weight] timestamp' per line, optionally gzip")
    src.add_argument("--synthetic", help="MODEL,N,PARAM with MODEL in {pa, rgg}")
    src.add_argument("--graph-seed", type=int)
    src.add_argument("--snapshots", type=int, help="number of synthetic snapshots after the base graph")
    src.add_argument("--batch", type=int, help="edges added per synthetic snapshot")
    src.add_argument("--event-batch", type=int, help="regroup stream events into snapshots of this many events")
    src.add_argument("--window", type=_window, help="snapshot indices I:J")
    src.add_argument("--reverse-time", action="store_true", default=None)
    p.add_argument("--alpha", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--operator", choices=KINDS)
    p.add_argument("--gamma", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--order", type=int)
    p.add_argument("--target", type=float)
    p.add_argument("--seeds", type=int)
    p.add_argument("--rng-seed", type=int)
    p.add_argument("--seed-node", type=int)
    p.add_argument("--tau-msg", type=float)
    p.add_argument("--dense-limit", type=int)
    p.add_argument("--out", help="CSV output path (default: stdout)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chebppr", description="Incremental personalized PageRank with Chebyshev diffusion.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, text in [
        ("solve", "Chebyshev solve from scratch on one snapshot"),
        ("update", "local update between two snapshots"),
        ("exp1", "update vs scratch over a message-budget sweep"),
        ("exp2", "messages to reach a target as the perturbation grows"),
        ("exp3", "Chebyshev update vs RWR vs push"),
        ("exp4", "tracking over consecutive snapshots at fixed order"),
    ]:
        p = sub.add_parser(name, help=text, description=text)
        _add_common(p)
        if name in ("solve", "update"):
            p.add_argument("--vector-out", help="file for the final vector (default: OUT with .npy suffix)")
        if name == "exp2":
            p.add_argument("--sizes", type=_int_list, help="comma-separated perturbation sizes in edges")
        if name == "exp3":
            p.add_argument("--targets", type=_float_list, help="comma-separated error targets")
            p.add_argument("--max-pushes", type=int)
        if name == "exp4":
            p.add_argument("--horizon", type=int)
            p.add_argument("--direction", choices=("additions", "deletions"))
    return parser


_CONFIG_KEYS = {
    "input": str, "synthetic": str, "graph_seed": int, "snapshots": int, "batch": int, "event_batch": int,
    "window": _window, "reverse_time": None, "alpha": float, "mu": float, "operator": str, "gamma": float,
    "sigma": float, "m": int, "order": int, "target": float, "seeds": int, "rng_seed": int, "seed_node": int,
    "tau_msg": float, "dense_limit": int, "out": str, "sizes": _int_list, "targets": _float_list,
    "horizon": int, "max_pushes": int, "direction": str, "vector_out": str,
}


def read_config_file(path: str) -> dict:
    """Parse ``key = value`` lines; keys use flag names with or without dashes."""
    values = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    for lineno, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {text!r}")
        key, value = (s.strip() for s in text.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        convert = _CONFIG_KEYS[key]
        try:
            if convert is None:
                values[key] = value.lower() in ("1", "true", "yes", "on")
            else:
                values[key] = convert(value)
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return values


def config_from_args(args: argparse.Namespace) -> tuple[ExperimentConfig, dict]:
    values = read_config_file(args.config) if args.config else {}
    for key, value in vars(args).items():
        if key in ("command", "config", "verbose") or value is None:
            continue
        values[key] = value
    extras = {k: values.pop(k) for k in ("vector_out", "direction") if k in values}
    if extras.get("direction") == "deletions":
        values["reverse_time"] = True
    if values.get("operator") is not None and values["operator"] not in KINDS:
        raise ConfigError(f"unknown operator {values['operator']!r}; choose from {', '.join(KINDS)}")
    return ExperimentConfig(**values), extras


def _vector_path(config: ExperimentConfig, extras: dict) -> Optional[str]:
    if extras.get("vector_out"):
        return extras["vector_out"]
    if config.out and config.out != "-":
        return config.out.rsplit(".", 1)[0] + ".npy"
    return None


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
        config, extras = config_from_args(args)
        if args.command in ("solve", "update"):
            rows, vector = (run_solve if args.command == "solve" else run_update)(config)
            write_csv(rows, config.out)
            path = _vector_path(config, extras)
            if path is not None:
                np.save(path, vector)
        elif args.command == "exp1":
            write_csv(run_exp1(config), config.out)
        elif args.command == "exp2":
            rows, crossover = run_exp2(config)
            for row in rows:
                row["crossover_edges"] = "" if crossover is None else crossover
            write_csv(rows, config.out)
        elif args.command == "exp3":
            write_csv(run_exp3(config), config.out)
        else:
            write_csv(run_exp4(config), config.out)
    except (ConfigError, GraphError, StreamFormatError) as exc:
        print(f"chebppr: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"chebppr: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
