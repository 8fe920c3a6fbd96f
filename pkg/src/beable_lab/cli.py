"""Command line entry point: ``beable-lab run|scan|circuit``.

Exit codes: 0 success, 2 invalid config or input, 3 numerical failure,
4 acceptance threshold breached under --check.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .circuits import CircuitFormatError
from .errors import NumericalFailure
from .harness import CheckFailure, ConfigError, ExperimentConfig, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 2, 3, 4


def _common(p: argparse.ArgumentParser):
    p.add_argument("--check", action="store_true", help="exit 4 if an acceptance threshold is breached")
    p.add_argument("--seed", type=int, default=None, help="override the master seed")
    p.add_argument("--out", default=None, help="directory for summary.json and table.csv")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="beable-lab", description="Simulate Bell-type jump processes and check discrete-time currents.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a JSON config")
    run.add_argument("config")
    _common(run)

    scan = sub.add_parser("scan", help="random search for condition violations of a candidate current")
    scan.add_argument("--dim", type=int, default=3)
    scan.add_argument("--samples", type=int, default=1000)
    scan.add_argument("--candidate", default="guess1:real:2", help="base:part[:scale]")
    scan.add_argument("--pair", type=int, nargs=2, default=[1, 0], metavar=("Q", "QPRIME"))
    _common(scan)

    circ = sub.add_parser("circuit", help="run the pairwise process through a circuit file")
    circ.add_argument("circuit_file")
    circ.add_argument("--runs", type=int, default=10_000)
    circ.add_argument("--tv-max", type=float, default=0.015)
    _common(circ)
    return parser


def _config_from_args(args) -> ExperimentConfig:
    if args.command == "run":
        return ExperimentConfig.load(args.config, seed_override=args.seed)
    if args.command == "scan":
        raw = {
            "kind": "violation-scan",
            "seed": 0,
            "dim": args.dim,
            "n_samples": args.samples,
            "candidate": args.candidate,
            "q_pair": list(args.pair),
        }
    else:
        raw = {
            "kind": "circuit",
            "seed": 0,
            "circuit": args.circuit_file,
            "n_runs": args.runs,
            "check": {"tv_max": args.tv_max},
        }
    return ExperimentConfig.from_dict(raw, seed_override=args.seed)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config_from_args(args)
        summary = run_experiment(cfg, out_dir=args.out, check=args.check)
    except (ConfigError, CircuitFormatError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CheckFailure as exc:
        print(json.dumps({"passed": False, "checks": exc.summary["checks"]}, indent=2))
        print(str(exc), file=sys.stderr)
        return EXIT_CHECK
    print(json.dumps({"kind": summary["kind"], "seed": summary["seed"], "passed": summary["passed"], "checks": summary["checks"]}, indent=2))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
