"""Command-line entry point: ``trivial-sre {synth,train,extract,score,eval,pipeline}``.

Exit status: 0 on success, 1 when a stage fails (the message names the stage
and the offending file), 2 for configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import describe_defaults, parse_config
from .errors import ParseError, SreError, UnknownKey
from .pipeline import STAGES, StageError, run_pipeline, run_stage

EVENT_CHOICES = ("cough", "laugh", "wei", "all")
SCORER_CHOICES = ("cosine", "lda", "plda")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trivial-sre",
        description="d-vector speaker verification on short trivial events.",
        epilog="config keys and defaults:\n" + describe_defaults(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("command", choices=STAGES + ("pipeline",))
    parser.add_argument("--config", metavar="PATH", help="key=value config file")
    parser.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                        dest="overrides", help="override one config key (repeatable)")
    parser.add_argument("--event", choices=EVENT_CHOICES, help="event to score/evaluate")
    parser.add_argument("--scorer", choices=SCORER_CHOICES, help="backend scorer")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--out", metavar="DIR", help="output directory")
    parser.add_argument("-q", "--quiet", action="store_true", help="only print errors")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")

    overrides = list(args.overrides)
    for flag, key in ((args.event, "eval.event"), (args.scorer, "eval.scorer"),
                      (args.seed, "seed"), (args.out, "paths.out_dir")):
        if flag is not None:
            overrides.append(f"{key}={flag}")
    try:
        cfg = parse_config(args.config, overrides)
    except (UnknownKey, ParseError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if cfg["eval.scorer"] not in SCORER_CHOICES:
        print(f"config error: eval.scorer must be one of {SCORER_CHOICES}", file=sys.stderr)
        return 2
    if cfg["eval.event"] not in EVENT_CHOICES:
        print(f"config error: eval.event must be one of {EVENT_CHOICES}", file=sys.stderr)
        return 2

    try:
        if args.command == "pipeline":
            run_pipeline(cfg)
        else:
            run_stage(args.command, cfg)
    except StageError as exc:
        print(f"error in stage {exc}", file=sys.stderr)
        return 1
    except SreError as exc:
        print(f"error in stage {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
