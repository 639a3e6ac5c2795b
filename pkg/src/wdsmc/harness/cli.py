"""``wdsmc`` command line: simulate, infer, report, ingest.

Exit codes: 0 success, 2 config error, 3 degeneracy abort, 4 I/O error.
"""

import argparse
import logging
import sys

from ..exceptions import InvalidConfig, MissingRun, ParseError, WDSMCError
from .config import builtin_configs
from .experiment import cli_infer, cli_report, cli_simulate, ingest_external

EXIT_OK, EXIT_CONFIG, EXIT_DEGENERATE, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("wdsmc")


def _steps(text):
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser():
    parser = argparse.ArgumentParser(prog="wdsmc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, obs=False):
        p.add_argument("--config", required=True,
                       help=f"config file or built-in name ({', '.join(builtin_configs())})")
        p.add_argument("--out", help="run directory (default: the config's 'output')")
        p.add_argument("--seed", type=int, help="override the seed")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config field, e.g. fixed.v0=9")
        if obs:
            p.add_argument("--obs", required=True, help="observations CSV")

    p = sub.add_parser("simulate", help="generate ground truth and noisy observations")
    common(p)
    p = sub.add_parser("infer", help="run the sampler on an observation series")
    common(p, obs=True)
    p.add_argument("--snapshots", action="store_true", help="dump the ensemble every step")
    p = sub.add_parser("report", help="WD comparisons and density grids for a finished run")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--steps", type=_steps, help="comma-separated report steps")
    p = sub.add_parser("ingest", help="validate an external observation CSV")
    p.add_argument("--obs", required=True, help="points CSV (t,x1..xd)")
    p.add_argument("--meta", help="metadata JSON (default: <obs stem>.meta.json)")
    p.add_argument("--out", help="write the parsed series into this directory")
    return parser


def _dispatch(args):
    if args.command == "simulate":
        out = cli_simulate(args.config, args.out, args.overrides, args.seed)
        print(f"wrote observations to {out}")
    elif args.command == "infer":
        out = args.out
        record = cli_infer(args.config, args.obs, out, args.overrides, args.seed, args.snapshots)
        for name, value in record.summary["posterior_mean"].items():
            print(f"{name}: mean {value:.6g}  std {record.summary['posterior_std'][name]:.6g}")
    elif args.command == "report":
        record = cli_report(args.out, args.steps)
        print("step  wd0  wd1  wd2")
        for step, wd in record.summary["wd"].items():
            print(f"{step}  {wd['wd0']:.6g}  {wd['wd1']:.6g}  {wd['wd2']:.6g}")
    elif args.command == "ingest":
        _, counts = ingest_external(args.obs, args.meta, args.out)
        for t, n in enumerate(counts, start=1):
            print(f"t={t} points={n}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _dispatch(args)
    except InvalidConfig as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, MissingRun, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except WDSMCError as exc:
        print(f"aborted: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
