"""Command line: ``eventdsa run``, ``eventdsa sweep`` and ``eventdsa selftest``."""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .config import FIELDS, ConfigError, parse_config
from .experiment import SweepResult, emit_csv, summarize, sweep_mu, train


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="plain-text 'key = value' file, overridden by flags")
    parser.add_argument("--out", metavar="PATH", help="CSV destination for the per-episode learning curves")
    group = parser.add_argument_group("experiment settings")
    for name in FIELDS:
        group.add_argument("--" + name.replace("_", "-"), dest=name, metavar="VALUE", default=None)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eventdsa", description="Event-driven spectrum access with multi-agent learning.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="train one (mu, algorithm) cell")
    _add_config_flags(run)
    sweep = sub.add_parser("sweep", help="train every (mu, algorithm) cell of the grid")
    _add_config_flags(sweep)
    sub.add_parser("selftest", help="check the simulator against brute-force oracles")
    return parser


def _print_table(result: SweepResult) -> None:
    print(f"{'mu':>6} {'algorithm':>9} {'final rate':>10} {'stderr':>8} {'runs':>5}")
    for cell in result.table():
        print(f"{cell.mu:>6g} {cell.algorithm:>9} {cell.mean:>10.4f} {cell.stderr:>8.4f} {cell.runs:>5d}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "selftest":
        from .selftest import run_all

        return 0 if run_all() else 1

    overrides = {name: getattr(args, name) for name in FIELDS}
    try:
        cfg = parse_config(overrides, args.config)
        if args.command == "run":
            for name in ("mu", "algorithm"):
                if len(getattr(cfg, name)) != 1:
                    raise ConfigError(f"{name}: 'run' trains a single cell; give one value or use 'sweep'")
    except ConfigError as exc:
        print(f"eventdsa: invalid configuration: {exc}", file=sys.stderr)
        return 2

    if args.command == "run":
        mu, alg = cfg.mu[0], cfg.algorithm[0]
        result = SweepResult({(mu, alg): train(cfg, alg, mu)})
    else:
        result = sweep_mu(cfg)
    _print_table(result)
    if args.out:
        try:
            emit_csv(result, args.out)
        except OSError as exc:
            print(f"eventdsa: {exc}", file=sys.stderr)
            return 1
        print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
