"""Command-line front end: ``myorepeat <command> [--config F] [--seed N] [--out DIR] [--jobs N]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ConfigError, load_config
from .errors import MyoRepeatError
from .pipeline import Runner, StageError

COMMANDS = ("synth", "preprocess", "features", "train", "evaluate", "run-all", "report",
            "show-config")


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config JSON (defaults apply when omitted)")
    common.add_argument("--seed", type=int, help="override the corpus seed")
    common.add_argument("--out", default="myorepeat-out", help="output directory")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="myorepeat", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="generate the synthetic corpus")
    for name, helptext in (("preprocess", "filter and relabel acquisitions"),
                           ("features", "extract window features")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--acq", type=int, nargs="+", help="acquisition ids (default: all)")
    for name, helptext in (("train", "grid search and train models"),
                           ("evaluate", "test trained models")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--experiment", type=int, nargs="+", help="experiment ids (default: all)")
    sub.add_parser("run-all", parents=[common], help="run every stage, skipping finished jobs")
    sub.add_parser("report", parents=[common], help="write report tables from results")
    sub.add_parser("show-config", parents=[common], help="print the effective config JSON")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("seed: must be an unsigned 64-bit integer")
        cfg = load_config(args.config, seed=args.seed)
    except (ConfigError, OSError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    if args.command == "show-config":
        print(json.dumps(cfg.model_dump(mode="json"), indent=2))
        return 0
    runner = Runner(cfg, args.out, jobs=args.jobs)
    try:
        if args.command == "synth":
            runner.synth()
        elif args.command == "preprocess":
            runner.preprocess(args.acq)
        elif args.command == "features":
            runner.features(args.acq)
        elif args.command == "train":
            runner.train(args.experiment)
        elif args.command == "evaluate":
            runner.evaluate(args.experiment)
        elif args.command == "report":
            runner.report()
        elif args.command == "run-all":
            runner.run_all()
    except StageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except MyoRepeatError as err:
        print(f"error in {args.command}: {err}", file=sys.stderr)
        return 1
    print(f"{args.command}: {len(runner.executed)} job(s) run, {len(runner.skipped)} up to date "
          f"[config_hash={cfg.config_hash()} seed={cfg.seed}]")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
