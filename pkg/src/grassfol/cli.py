"""Command-line entry point: ``python -m grassfol <experiment> [flags]``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .dimension import parse_window
from .experiments import PLANAR_FAMILIES, SPHERE_FAMILIES, ExperimentConfig, GateError, run

SUBCOMMANDS = {
    "identities": "randomized checks of the exact algebraic identities",
    "tails": "small-r exponents of distance and transversality tails",
    "marstrand": "transverse dimension of a fractal measure for sampled centers",
    "sphere-chains": "transverse dimension for sphere and chain foliations",
    "energy": "boundedness or growth of projected sigma-energies",
    "affine-check": "compare radial projection from infinity with orthogonal projection",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grassfol", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", type=Path, help="JSON config (schema 1); flags override its values")
        p.add_argument("--field", choices=["R", "C"])
        p.add_argument("--n", type=int)
        p.add_argument("--k", type=int)
        p.add_argument("--samples", type=int)
        p.add_argument("--seed", type=int, help="overrides GM_SEED and the config seed")
        p.add_argument("--window", type=parse_window, metavar="RMIN:RMAX", help="scale window, e.g. 2^-12:2^-3")
        p.add_argument("--fractal", metavar="NAME|PATH", help="cantor, cantor-product, four-corner, menger, cantor:<s> or a JSON IFS")
        p.add_argument("--family", choices=PLANAR_FAMILIES + SPHERE_FAMILIES)
        p.add_argument("--centers", type=int)
        p.add_argument("--sigma", type=float, action="append", dest="sigmas", help="energy exponent (repeatable)")
        p.add_argument("--threads", type=int)
        p.add_argument("--out", metavar="PATH", help="JSON report path ('-' for stdout); raw rows go next to it as CSV")
    return parser


def config_from_args(args: argparse.Namespace, environ=os.environ) -> ExperimentConfig:
    experiment = args.command.replace("-", "_")
    if args.config is not None:
        config = ExperimentConfig.from_json(args.config.read_text())
        if config.experiment != experiment:
            raise ValueError(f"config is for {config.experiment!r}, not {experiment!r}")
    else:
        config = ExperimentConfig(experiment)
    overrides = {}
    if environ.get("GM_SEED"):
        overrides["seed"] = int(environ["GM_SEED"])
    flags = {
        "field": args.field,
        "n": args.n,
        "k": args.k,
        "samples": args.samples,
        "seed": args.seed,
        "scale_window": args.window,
        "fractal": args.fractal,
        "family": args.family,
        "centers": args.centers,
        "sigmas": None if args.sigmas is None else tuple(args.sigmas),
        "threads": args.threads,
        "output_path": args.out,
    }
    overrides.update({k: v for k, v in flags.items() if v is not None})
    return replace(config, **overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        report = run(config)
    except GateError as exc:
        print(f"refusing to run: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for line in report.summary_lines():
        print(line, file=sys.stderr)
    for note in report.notes:
        print(f"note: {note}", file=sys.stderr)
    print(f"audit hash {report.audit_hash}  ({report.wall_clock:.1f} s)", file=sys.stderr)
    if config.output_path == "-":
        sys.stdout.write(report.to_json() + "\n")
    elif config.output_path:
        json_path, csv_path = report.write(config.output_path)
        print(f"wrote {json_path} and {csv_path}", file=sys.stderr)
    else:
        sys.stdout.write(json.dumps({"passed": report.passed, "audit_hash": report.audit_hash}) + "\n")
    return 0 if report.passed else 1
