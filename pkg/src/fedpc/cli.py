"""Command-line front end.

    fedpc generate --config exp.json --seed 7 --out data/
    fedpc run      --config exp.json --clients 5 --alpha 0.01
    fedpc sweep    --config exp.json --param keep_ratio --values 0.2 0.3 0.5 0.9

Flags override the manifest's keys. Exit status: 0 on success, 2 for an
invalid manifest or flag, 3 when a run failed (whatever finished is
still written).
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import FedPCError
from .experiment import (
    ALGORITHMS,
    SWEEPABLE,
    WORKERS_ENV,
    ExperimentSpec,
    SpecError,
    cmd_generate,
    cmd_run,
    cmd_sweep,
    read_manifest,
)

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment manifest (keys of ExperimentSpec)")
    p.add_argument("--seed", type=int, nargs="+", help="seed(s); replaces the manifest's seed list")
    p.add_argument("--clients", type=int, help="number of clients N")
    p.add_argument("--alpha", type=float, help="CI test significance level")
    p.add_argument("--ratio", type=float, help="edge keep ratio of the skeleton vote")
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int, help=f"parallel runs (env {WORKERS_ENV} takes precedence)")
    p.add_argument("--algorithms", help=f"comma separated subset of {','.join(ALGORITHMS)}")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedpc", description="Federated PC structure learning experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("generate", "write seeded synthetic datasets (CSV + schema + truth)"),
        ("run", "run the configured algorithms over all seeds"),
        ("sweep", "repeat the run over a list of parameter values"),
    ):
        p = sub.add_parser(name, help=text, description=text)
        _add_common(p)
        if name == "sweep":
            p.add_argument("--param", required=True, choices=SWEEPABLE)
            p.add_argument("--values", required=True, nargs="+", help="values of the swept parameter")
    return parser


def resolve_spec(args: argparse.Namespace) -> ExperimentSpec:
    doc = read_manifest(args.config) if args.config else ExperimentSpec().to_dict()
    overrides = {
        "seeds": args.seed,
        "n_clients": args.clients,
        "alpha": args.alpha,
        "keep_ratio": args.ratio,
        "output": args.out,
        "workers": args.workers,
        "algorithms": [a.strip() for a in args.algorithms.split(",") if a.strip()] if args.algorithms else None,
    }
    doc.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentSpec.from_dict(doc)


def _sweep_values(param: str, raw: list[str]) -> list:
    try:
        return [int(v) for v in raw] if param == "n_clients" else [float(v) for v in raw]
    except ValueError:
        raise SpecError(f"--values for {param} must be numbers, got {raw}") from None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        spec = resolve_spec(args)
        if args.command == "generate":
            for path in cmd_generate(spec):
                print(path)
            return EXIT_OK
        if args.command == "run":
            doc = cmd_run(spec)
        else:
            doc = cmd_sweep(spec, args.param, _sweep_values(args.param, args.values))
    except SpecError as exc:
        print(f"fedpc: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, FedPCError) as exc:
        # unreadable files or data the algorithms cannot use
        print(f"fedpc: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    stem = "results" if args.command == "run" else "sweep"
    print(f"wrote {spec.output}/{stem}.json")
    if doc["failures"]:
        print(f"fedpc: {doc['failures']} run(s) failed", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
