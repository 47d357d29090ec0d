"""Command line entry point.

Exit codes: 0 success, 1 configuration error, 2 numerical failure
(divergence, stiffness, singular solve or a non-finite metric).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from ..errors import ConfigError, ESNRLError, NumericalError, ParameterError, SingularityError
from .config import load_config
from .pipeline import oracle_summary, run_experiment, sweep
from .report import emit_report

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2


def _u64(text: str) -> int:
    val = int(text)
    if not 0 <= val < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return val


def _positive_int(text: str) -> int:
    val = int(text)
    if val < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return val


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="esnrl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one seeded experiment and write its report")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=_u64, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep", help="run consecutive seeds and summarise them")
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", type=_positive_int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=_positive_int, default=None)

    p = sub.add_parser("oracle", help="print the ground-truth quantities for a config")
    p.add_argument("--env", choices=["bee", "mm"], required=True)
    p.add_argument("--config", required=True)

    p = sub.add_parser("validate", help="check a config and print its resolved form")
    p.add_argument("--config", required=True)
    return parser


def _dump(doc) -> None:
    json.dump(doc, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _dispatch(args) -> int:
    if args.command == "validate":
        _dump(load_config(args.config).to_dict())
    elif args.command == "oracle":
        cfg = load_config(args.config)
        _dump(oracle_summary(cfg, "bee" if args.env == "bee" else "market_maker"))
    elif args.command == "run":
        cfg = load_config(args.config, seed=args.seed)
        report = run_experiment(cfg)
        emit_report(report, args.out)
        print(f"wrote report to {args.out}")
    elif args.command == "sweep":
        cfg = load_config(args.config)
        summary = sweep(cfg, args.seeds, args.out, args.workers)
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
        _dump({k: v for k, v in summary.items() if k != "runs"})
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, SingularityError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ParameterError as exc:
        # a parameter the schema admits but a module rejects is still a config problem
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ESNRLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
