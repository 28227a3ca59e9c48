"""Command-line interface: thin wrappers over pipeline stages.

Every subcommand resolves to one or more pipeline stages; no reconstruction
logic lives here. Exit codes: 0 ok, 2 config error, 3 numerical failure,
4 stage failure.
"""

import argparse
import sys

import numpy as np

from .pipeline import (
    STAGE_ORDER,
    ConfigError,
    StageError,
    Workspace,
    load_config,
    run_stage,
)

_NUMERICAL = (np.linalg.LinAlgError, FloatingPointError, OverflowError, ZeroDivisionError)


def _add_common(parser):
    parser.add_argument("--config", default=None, help="JSON config path")
    parser.add_argument("--workspace", default="workspace", help="artifact directory")
    parser.add_argument("--seed", type=int, default=None, help="override global seed")
    parser.add_argument("--force", action="store_true", help="ignore stage cache")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ovrcine",
        description="Outer-volume-removal reconstruction pipeline for "
        "accelerated dynamic MRI phantoms.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    simple = {
        "simulate": ("simulate phantom, coil maps, and k-space series", ["simulate"]),
        "composite": ("form composite images from the working series", ["composite"]),
        "ghost-oracle": ("generate ghost reference labels", ["ghost-labels"]),
        "ghost-train": ("train the ghost-separating network", ["ghost-train"]),
        "ghost-detect": ("estimate backgrounds and the OVR mask", ["ghost-detect"]),
        "ovr-subtract": ("subtract masked background from k-space", ["ovr-subtract"]),
        "recon-tgrappa": ("TGRAPPA baseline reconstruction", ["recon-tgrappa"]),
        "recon-cgsense": ("CG-SENSE baseline reconstruction", ["recon-cgsense"]),
        "pddl-recon": ("reconstruct with trained unrolled networks", ["pddl-recon"]),
        "evaluate": ("metrics CSV and PNG panels", ["evaluate"]),
    }
    for name, (help_text, _) in simple.items():
        p = sub.add_parser(name, help=help_text)
        _add_common(p)

    p = sub.add_parser("pddl-train", help="train an unrolled reconstruction network")
    _add_common(p)
    maps = p.add_mutually_exclusive_group(required=True)
    maps.add_argument(
        "--masked-maps", action="store_true",
        help="train on OVR k-space with masked sensitivities",
    )
    maps.add_argument(
        "--full-maps", action="store_true",
        help="train on OVR k-space with full sensitivities plus the "
        "consistency term",
    )
    maps.add_argument(
        "--no-ovr", action="store_true",
        help="train the baseline on the raw (non-subtracted) k-space",
    )
    p.add_argument(
        "--consistency", type=float, default=None, metavar="LAMBDA",
        help="consistency weight for --full-maps (default from config)",
    )

    p = sub.add_parser("run", help="run the full pipeline (or one stage)")
    _add_common(p)
    p.add_argument("--stage", default=None, choices=STAGE_ORDER, help="run only this stage")

    return parser, simple


def _resolve_stages(args, simple):
    if args.command == "run":
        return STAGE_ORDER if args.stage is None else (args.stage,)
    if args.command == "pddl-train":
        if args.masked_maps:
            return ("pddl-masked",)
        if args.full_maps:
            return ("pddl-full",)
        return ("pddl-plain",)
    return tuple(simple[args.command][1])


def main(argv=None):
    parser, simple = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = int(args.seed)
        if args.command == "pddl-train" and args.consistency is not None:
            if not args.full_maps:
                raise ConfigError("--consistency applies only with --full-maps")
            cfg["pddl"]["lam"] = float(args.consistency)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    ws = Workspace(args.workspace)
    for stage in _resolve_stages(args, simple):
        try:
            ran, digest = run_stage(cfg, ws, stage, force=args.force)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
        except StageError as exc:
            if isinstance(exc.__cause__, _NUMERICAL):
                print(f"numerical failure: {exc}", file=sys.stderr)
                return 3
            print(f"stage failure: {exc}", file=sys.stderr)
            return 4
        state = "ran" if ran else "cached"
        print(f"{stage}: {state} ({digest[:12]})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
