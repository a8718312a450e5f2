"""
Command dispatcher for lane-cluster.

Parses the command line and hands the arguments to the matching handler in
commands.py. Handlers are imported lazily so `--help` stays cheap.

Exit codes: 0 success, 1 validation error (bad input, bad usage), 2 numerical
failure.
"""

from __future__ import annotations

import argparse
import sys
from collections.abc import Sequence

from . import __version__
from .errors import LaneClusterError
from .log import configure


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="TOML", help="settings file overriding the defaults")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="log debug messages to stderr")
    parser.add_argument("-q", "--quiet", action="store_true", help="only log errors")
    parser.add_argument("--out", required=True, metavar="PATH", help="output file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lane-cluster",
        description="Object-to-centerline clustering on BEV lane graphs.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("generate", help="generate a synthetic scene from a scene spec")
    p.add_argument("--spec", required=True, metavar="JSON", help="scene spec file")
    p.add_argument("--seed", type=int, help="overrides the spec's seed")
    _common(p)

    p = sub.add_parser("assign", help="true object memberships of a scene")
    p.add_argument("--scene", required=True, metavar="JSON")
    _common(p)

    p = sub.add_parser("labels", help="target memberships and losses for a predicted graph")
    p.add_argument("--scene", required=True, metavar="JSON")
    p.add_argument("--pred", required=True, metavar="JSON")
    p.add_argument("--logits", metavar="JSON", help="per-object logits; uniform when omitted")
    p.add_argument("--alpha", type=float, help="clustering loss weight")
    _common(p)

    p = sub.add_parser("descend", help="gradient descent on the predicted control points")
    p.add_argument("--scene", required=True, metavar="JSON")
    p.add_argument("--pred", required=True, metavar="JSON")
    p.add_argument("--logits", metavar="JSON")
    p.add_argument("--alpha", type=float)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--steps", type=int, default=100)
    _common(p)

    p = sub.add_parser("em-fit", help="fit centerlines to the scene's objects by EM")
    p.add_argument("--scene", required=True, metavar="JSON")
    p.add_argument("--k", type=int, required=True, help="number of centerlines")
    p.add_argument("--sigma", type=float, help="lateral spread in meters")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--trace", metavar="CSV", help="per-iteration log-likelihood")
    _common(p)

    p = sub.add_parser("eval", help="M-F, Detect and C-F of a predicted graph")
    p.add_argument("--pred", required=True, metavar="JSON")
    p.add_argument("--gt", required=True, metavar="JSON")
    _common(p)

    p = sub.add_parser("match", help="Hungarian matching of predicted and true centerlines")
    p.add_argument("--pred", required=True, metavar="JSON")
    p.add_argument("--gt", required=True, metavar="JSON")
    _common(p)

    return parser


def _dispatch(args: argparse.Namespace) -> int:
    command = args.command
    if command == "generate":
        from .commands import generate

        return generate(args)
    elif command == "assign":
        from .commands import assign

        return assign(args)
    elif command == "labels":
        from .commands import labels

        return labels(args)
    elif command == "descend":
        from .commands import descend

        return descend(args)
    elif command == "em-fit":
        from .commands import em_fit

        return em_fit(args)
    elif command == "eval":
        from .commands import evaluate

        return evaluate(args)
    elif command == "match":
        from .commands import match

        return match(args)
    raise AssertionError(f"unhandled command {command!r}")


def cli_main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help/--version and 2 for usage errors
        return 0 if exc.code in (0, None) else 1

    configure(args.verbose, args.quiet)
    try:
        return _dispatch(args)
    except LaneClusterError as exc:
        print(f"lane-cluster {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code


def main() -> int:
    return cli_main(sys.argv[1:])
