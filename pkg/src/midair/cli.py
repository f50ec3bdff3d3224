"""Command-line entry point.

    midair run --config cfg.ini --episodes 16 --seed 1000 --out results/ \
               [--oracle-attitude] [--report {csv,text}] [--jobs N] [--no-figures]

Runs a seeded campaign, writes summary CSV / text table / figures / per-tick
logs into the output directory, prints the chosen report to stdout, and
exits 0 only if every episode recovered.
"""

import argparse
import sys

from .campaign import run_campaign, summary_csv, summary_text
from .config import EpisodeConfig, config_from_ini


def build_parser():
    parser = argparse.ArgumentParser(
        prog="midair",
        description="Throw-recovery flight stack simulation campaigns")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a Monte-Carlo throw campaign")
    run_p.add_argument("--config", help="INI config file (defaults otherwise)")
    run_p.add_argument("--episodes", type=int, default=16, metavar="N")
    run_p.add_argument("--seed", type=int, default=1, metavar="S",
                       help="base seed; episode i uses S + i")
    run_p.add_argument("--out", default="midair_out", metavar="DIR")
    run_p.add_argument("--oracle-attitude", action="store_true",
                       help="feed ground-truth attitude to the controller")
    run_p.add_argument("--report", choices=("csv", "text"), default="text",
                       help="which summary to print to stdout")
    run_p.add_argument("--jobs", type=int, default=1,
                       help="episodes to run in parallel")
    run_p.add_argument("--no-figures", action="store_true",
                       help="skip PNG rendering")
    return parser


def cmd_run(args):
    cfg = EpisodeConfig()
    if args.config:
        cfg = config_from_ini(args.config, base=cfg)
    cfg.seed = args.seed
    if args.oracle_attitude:
        cfg.oracle_attitude = True

    summary = run_campaign(args.episodes, cfg, out_dir=args.out, jobs=args.jobs,
                           figures=not args.no_figures)
    print(summary_csv(summary) if args.report == "csv" else summary_text(summary))
    print(f"reports written to {args.out}")
    return 0 if summary.all_success else 1


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
