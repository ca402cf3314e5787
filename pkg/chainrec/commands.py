"""
chainrec command-line interface.

    python -m chainrec.cli analyze --map northsouth --a 0.1 --grid 1024
    python -m chainrec.cli recurrence --map cat --iters 10000 --seed 7
    python -m chainrec.cli sweep --map northsouth --epsilons 1/1024,2/1024,4/1024

Exit codes: 0 success, 1 failed verification or threshold, 2 bad input
(parse, configuration, domain), 3 lattice cap exceeded.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

from ._version import PACKAGE_VERSION
from .chaingraph import GraphConstructionError
from .conley import LatticeCapExceeded
from .exports import histogram_csv, sweep_csv, write_analysis_files, write_json
from .expressions import ParseError
from .grid import DomainError
from .logging_config import configure_logging
from .mapdef import MapDefinitionError, MapEvaluationError
from .pipeline import (
    SweepMonotonicityError,
    analysis_bundle,
    run_analysis,
    run_recurrence,
    run_sweep,
)
from .settings import ConfigError, RunConfig, build_run_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INPUT = 2
EXIT_CAP = 3

INPUT_ERRORS = (
    ConfigError,
    ParseError,
    MapDefinitionError,
    MapEvaluationError,
    DomainError,
    GraphConstructionError,
)

# argparse dests that are not RunConfig fields
_CLI_ONLY = ("command", "config", "log_level", "log_format")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None, metavar="FILE",
                   help="key=value settings file; flags override it")
    p.add_argument("--map", default=None,
                   help="built-in name (identity, rotation, northsouth, cat) or expression text")
    p.add_argument("--alpha", default=None, help="rotation angle as a fraction of a turn")
    p.add_argument("--a", default=None, help="northsouth amplitude, |2*pi*a| < 1")
    p.add_argument("--grid", default=None, metavar="N[xM...]", help="subdivisions per axis")
    p.add_argument("--bounds", default=None, metavar="LO:HI,...",
                   help="domain box (default: the map's natural domain)")
    p.add_argument("--periodic", default=None, metavar="BOOL,...",
                   help="periodic flag per axis (default: all periodic)")
    p.add_argument("--epsilon", default=None, help="chain step, e.g. 2/1024 (default: two cell widths)")
    p.add_argument("--mode", choices=("center", "outer"), default=None, help="edge rule")
    p.add_argument("--out", default=None, metavar="DIR", help="output directory")
    p.add_argument("--format", dest="formats", default=None, metavar="LIST",
                   help="comma-separated output formats from json,csv,dot")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None,
                   help="threads for graph construction (output does not depend on it)")
    p.add_argument("--record-timings", action="store_const", const=True, default=None,
                   help="write stage durations into bundle.json")
    p.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    p.add_argument("--log-format", choices=("json", "dev"), default=None)


def _parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    p = argparse.ArgumentParser(
        prog="chainrec",
        description="Finite-resolution chain recurrence, attractors and Lyapunov functions",
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {PACKAGE_VERSION}")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="Morse decomposition, attractors and complete Lyapunov function")
    _add_common(a)
    a.add_argument("--family", choices=("canonical", "full"), default=None,
                   help="attractors from single-node downsets, or every downset")
    a.add_argument("--cap", default=None, metavar="N",
                   help="maximum Morse nodes for --family full")

    r = sub.add_parser("recurrence", help="return-time simulation or graph connectivity")
    _add_common(r)
    r.add_argument("--points", default=None, metavar="N")
    r.add_argument("--iters", default=None, metavar="N")
    r.add_argument("--delta", default=None, help="return radius")
    r.add_argument("--min-returned", default=None, metavar="F",
                   help="pass threshold on the returned fraction")
    r.add_argument("--connectivity", action="store_const", const=True, default=None,
                   help="check strong connectivity of the transition graph instead")
    r.add_argument("--require-connected", action="store_const", const=True, default=None,
                   help="with --connectivity, exit 1 unless strongly connected")

    s = sub.add_parser("sweep", help="graph statistics over ascending epsilons")
    _add_common(s)
    s.add_argument("--epsilons", default=None, metavar="LIST", help="e.g. 1/1024,2/1024,4/1024")
    return p.parse_args(argv)


def _flags(args: argparse.Namespace) -> Dict[str, Any]:
    return {k: v for k, v in vars(args).items() if k not in _CLI_ONLY and v is not None}


# ---- Commands ----


def cmd_analyze(config: RunConfig) -> int:
    run = run_analysis(config)
    bundle = analysis_bundle(run, include_timings=config.record_timings)
    write_analysis_files(config.out, config.formats, bundle, run.graph, run.partition, run.lyapunov)

    codes = ", ".join(str(v) for v in run.lyapunov.critical_values) if run.lyapunov else "-"
    print(
        f"cells={run.graph.num_cells} edges={run.graph.edge_count} "
        f"morse_nodes={run.partition.num_morse} pairs={run.family.k} "
        f"critical_values=[{codes}] ok={str(run.ok).lower()}"
    )
    if not run.ok:
        logger.error("Verification failed: %s", bundle.checks.model_dump())
    return run.exit_code


def cmd_recurrence(config: RunConfig) -> int:
    run = run_recurrence(config)
    out = run.output
    if "json" in config.formats:
        write_json(config.out / "recurrence.json", out)
    if "csv" in config.formats and out.histogram:
        path = config.out / "histogram.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(histogram_csv(out.histogram), encoding="utf-8")

    if out.connectivity is not None:
        witness = out.connectivity.witness
        print(
            f"strongly_connected={str(out.connectivity.strongly_connected).lower()}"
            + (f" witness={witness[0]},{witness[1]}" if witness else "")
        )
    else:
        print(f"returned_fraction={out.returned_fraction!r} passed={str(out.passed).lower()}")
    return run.exit_code


def cmd_sweep(config: RunConfig) -> int:
    try:
        output = run_sweep(config)
        code = EXIT_OK
    except SweepMonotonicityError as e:
        logger.error("Sweep is not monotone: %s", e)
        output = e.output  # type: ignore[attr-defined]
        code = EXIT_FAILED
    if "json" in config.formats:
        write_json(config.out / "sweep.json", output)
    if "csv" in config.formats:
        path = config.out / "sweep.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(sweep_csv(output.rows), encoding="utf-8")
    for row in output.rows:
        print(
            f"epsilon={row.epsilon!r} edges={row.edges} "
            f"recurrent_cells={row.recurrent_cells} morse_nodes={row.morse_nodes}"
        )
    return code


COMMANDS = {"analyze": cmd_analyze, "recurrence": cmd_recurrence, "sweep": cmd_sweep}


def main_cli(argv: Optional[Sequence[str]] = None, environ: Optional[Dict[str, str]] = None) -> int:
    args = _parse_args(argv)
    configure_logging(
        level=args.log_level,
        force_json=args.log_format == "json",
        force_dev=args.log_format == "dev",
    )
    try:
        config = build_run_config(_flags(args), config_path=args.config, environ=environ)
        return COMMANDS[args.command](config)
    except LatticeCapExceeded as e:
        print(f"chainrec: {e}; rerun with a larger --cap or --family canonical", file=sys.stderr)
        return EXIT_CAP
    except ParseError as e:
        print(f"chainrec: parse error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except INPUT_ERRORS as e:
        print(f"chainrec: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main_cli())
