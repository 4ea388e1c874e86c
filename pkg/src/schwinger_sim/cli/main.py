"""Argument parsing, dispatch and exit-code handling."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

from ..errors import AbortedRunError, NumericalError, SchwingerSimError, ValidationError
from . import commands
from .config import ConfigError, load_config, validate_output

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_ORACLE = 3

log = logging.getLogger("schwinger_sim")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="TOML run configuration")
    common.add_argument("--out", default=".", help="output directory (default: current)")
    common.add_argument("--verbose", "-v", action="count", default=0, help="more logging")

    parser = argparse.ArgumentParser(
        prog="schwinger-sim",
        description="Pair creation of lattice Dirac fermions: bands, protocol runs, sweeps, "
                    "optical-lattice design and exact-diagonalization checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("bands", parents=[common], help="dispersion table")
    sub.add_parser("simulate", parents=[common], help="run one protocol")
    sweep = sub.add_parser("sweep", parents=[common], help="run a parameter sweep")
    sweep.add_argument("--workers", type=int, default=None,
                       help="worker processes (default: available CPUs)")
    sub.add_parser("design", parents=[common], help="optical-lattice design report")
    oracle = sub.add_parser("oracle-check", parents=[common], help="exact-diagonalization battery")
    oracle.add_argument("--seed", type=int, default=None, help="RNG seed (overrides config)")
    return parser


def _error_document(kind: str, message: str, code: int, exc: Exception | None = None) -> dict:
    doc = {"kind": "error", "status": "error", "error_type": kind, "message": message,
           "exit_code": code}
    if isinstance(exc, AbortedRunError):
        doc["time"] = exc.time
        doc["records"] = len(exc.trajectory or [])
    return doc


def _report_error(out: Path, doc: dict) -> None:
    validate_output(doc)
    text = json.dumps(doc, indent=2, sort_keys=True)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "error.json").write_text(text + "\n")
    except OSError:
        pass
    print(text, file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    try:
        if getattr(args, "workers", None) is not None and args.workers < 1:
            raise ValidationError("--workers must be >= 1")
        cfg = load_config(args.config, args.command)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            if args.command == "bands":
                doc = commands.run_bands(cfg, out)
            elif args.command == "simulate":
                doc = commands.run_simulate(cfg, out)
            elif args.command == "sweep":
                doc = commands.run_sweep(cfg, out, args.workers)
            elif args.command == "design":
                doc = commands.run_design(cfg, out)
                print(doc["table"])
            else:
                doc = commands.run_oracle_check(cfg, out, args.seed)
    except ConfigError as exc:
        for line in exc.messages:
            print(f"error: {line}", file=sys.stderr)
        _report_error(out, _error_document("validation", str(exc), EXIT_VALIDATION))
        return EXIT_VALIDATION
    except commands.OracleCheckFailed as exc:
        print(json.dumps(exc.report, indent=2, sort_keys=True))
        _report_error(out, _error_document("oracle", str(exc), EXIT_ORACLE))
        return EXIT_ORACLE
    except ValidationError as exc:
        _report_error(out, _error_document("validation", str(exc), EXIT_VALIDATION, exc))
        return EXIT_VALIDATION
    except (NumericalError, ArithmeticError) as exc:
        _report_error(out, _error_document("numerical", str(exc), EXIT_NUMERICAL, exc))
        return EXIT_NUMERICAL
    except SchwingerSimError as exc:
        _report_error(out, _error_document("validation", str(exc), EXIT_VALIDATION, exc))
        return EXIT_VALIDATION
    if args.command != "design":
        summary = {k: v for k, v in doc.items() if k != "points"}
        print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK
