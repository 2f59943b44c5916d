"""Command-line entry point: ``autocal <stage> --config run.toml``.

Exit codes: 0 success, 1 protocol failure, 2 bad config or arguments,
3 missing prerequisite record.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import RunConfig
from .errors import CalibrationError, DependencyError, InvalidArgument
from .pipeline import RUNNERS, run_pipeline, run_rb
from .store import RecordStore, resolve_store_path

EXIT_FAILED, EXIT_USAGE, EXIT_DEPENDENCY = 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="autocal", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"autocal {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("autorabi", "loss-driven f_q / f_r / amplitude search per qubit"),
        ("finetune", "X90 / X180 amplitude from stacked-gate scans"),
        ("crsweep", "cross-resonance amplitude from |R| sweeps"),
        ("xyfit", "CNOT correction angles from the full XY-plane measurement"),
        ("rb", "randomized benchmarking (SRB, IRB, XRB)"),
        ("pipeline", "all stages in order"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="JSON or TOML run config")
        p.add_argument("--out", type=Path, help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, help="run seed (overrides the config)")
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("rb", "pipeline"):
            p.add_argument("--inject", help='noise after every Clifford, e.g. "depolarizing=0.01"')
        if name == "rb":
            p.add_argument("--channel", choices=("backend", "ideal"), help="calibrated pulses or ideal gates")
    return parser


def load_config(args) -> RunConfig:
    if args.config is not None:
        cfg = RunConfig.load(args.config)
    elif args.seed is not None:
        cfg = RunConfig(seed=args.seed)
    else:
        raise InvalidArgument("give --config or at least --seed")
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out_dir"] = str(args.out)
    if getattr(args, "channel", None):
        stages = {k: dict(v) for k, v in cfg.stages.items()}
        stages["rb"]["channel"] = args.channel
        changes["stages"] = stages
    return replace(cfg, **changes) if changes else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        store = RecordStore(resolve_store_path(cfg.store or Path(cfg.out_dir) / "records.jsonl"))
        envelope = {"command": args.command, "invoked_at": time.time()}
        inject = getattr(args, "inject", None)
        if args.command == "pipeline":
            result = run_pipeline(cfg, store, envelope, inject)
        elif args.command == "rb":
            result = run_rb(cfg, store, envelope, inject)
        else:
            result = RUNNERS[args.command](cfg, store, envelope)
    except DependencyError as exc:
        print(f"autocal {args.command}: dependency error: {exc}", file=sys.stderr)
        return EXIT_DEPENDENCY
    except InvalidArgument as exc:
        print(f"autocal {args.command}: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CalibrationError as exc:
        print(f"autocal {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED
    print(json.dumps(result, sort_keys=True, indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
