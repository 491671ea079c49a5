"""Command line entry point: ``metaopt {run,sweep,beampattern,validate-config}``.

Exit codes: 0 success, 2 configuration error, 3 numeric abort.
"""
import argparse
import dataclasses
import sys

from ..errors import ConfigError, NonFiniteGradient, NonFiniteLoss
from .config import dump_config, load_config, with_preset
from .runner import beampattern_dump, run_scenario, summarize, tradeoff_sweep, write_csv, write_table

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def build_parser():
    parser = argparse.ArgumentParser(prog="metaopt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="scenario INI file")
        p.add_argument("--seed", type=int, help="override scenario.seed")
        p.add_argument("--out", help="override scenario.output")
        p.add_argument("--scale", choices=("desk", "paper"), help="size preset")
        return p

    for name, text in (("run", "run every realization and grid point"),
                       ("sweep", "ISAC regularization sweep, one pass per lambda")):
        p = common(sub.add_parser(name, help=text))
        p.add_argument("--parallel", type=int, default=1, help="worker processes")
        p.add_argument("--timing", action="store_true",
                       help="fill the seconds column (output is then not reproducible)")
    p = common(sub.add_parser("beampattern", help="beampattern table of an ISAC run"))
    p.add_argument("--resolution", type=int, default=361, help="angle grid points")
    p = sub.add_parser("validate-config", help="check a config and print it with defaults")
    p.add_argument("--config", required=True)
    p.add_argument("--scale", choices=("desk", "paper"))
    return parser


def _config(args):
    cfg = with_preset(load_config(args.config), args.scale)
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        changes["output"] = args.out
    return dataclasses.replace(cfg, **changes)


def _print_summary(records):
    for row in summarize(records):
        print(f"{row['suite']} snr_db={row['snr_db']:g} lambda={row['lambda']:g} "
              f"esr={row['esr']:.6f} probing_power={row['probing_power']:.6g} "
              f"qos_violations={row['qos_violations']:.3g} n={row['realizations']}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        if args.command == "validate-config":
            sys.stdout.write(dump_config(cfg))
            return EXIT_OK
        if args.command == "run":
            records = run_scenario(cfg, args.parallel)
        elif args.command == "sweep":
            records = tradeoff_sweep(cfg, args.parallel)
        else:
            write_table(beampattern_dump(cfg, args.resolution), cfg.output)
            return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonFiniteLoss, NonFiniteGradient) as exc:
        it = getattr(exc, "iteration", None)
        print(f"numeric abort{'' if it is None else f' at iteration {it}'}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    write_csv(records, cfg.output, timing=args.timing)
    _print_summary(records)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
