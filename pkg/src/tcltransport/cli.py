"""Command-line entry point: ``tcltransport run|compare|report``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .exceptions import ConfigError, NumericalError

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


def _cmd_run(args) -> int:
    from .config import load_config
    from .runner import run_experiment, summarize

    cfg = load_config(args.config)
    if args.seeds is not None:
        from .config import parse_seeds

        cfg = cfg.replace(seeds=parse_seeds(args.seeds))
    out = args.output or cfg.output_dir
    run_experiment(cfg, out)
    print(summarize(out))
    return EXIT_OK


def _cmd_compare(args) -> int:
    from .exact import OccupationSeries
    from .runner import compare_series

    try:
        a = OccupationSeries.from_csv(args.a)
        b = OccupationSeries.from_csv(args.b)
    except (OSError, ValueError, IndexError) as exc:
        raise ConfigError(f"cannot read series: {exc}") from None
    window = None if args.window is None else tuple(args.window)
    report = compare_series(a, b, window)
    print(json.dumps(report.as_dict(), indent=2))
    return EXIT_OK


def _cmd_report(args) -> int:
    from .runner import summarize, verify_manifest

    try:
        print(summarize(args.directory))
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"{args.directory}: not a result bundle ({exc})") from None
    bad = verify_manifest(args.directory)
    if bad:
        print("  modified or missing: " + ", ".join(bad))
        return EXIT_INVALID
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tcltransport", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment from a config file or preset name")
    p.add_argument("config", help="path to a .cfg file, or one of fig3, fig4, fig5, fig6")
    p.add_argument("-o", "--output", help="output directory (overrides the config)")
    p.add_argument("--seeds", help="seed count or comma-separated list (overrides the config)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("compare", help="deviation between two occupation CSV files")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--window", nargs=2, type=float, metavar=("T_LO", "T_HI"))
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("report", help="summarise a result directory and verify its hashes")
    p.add_argument("directory")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalError, ArithmeticError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
