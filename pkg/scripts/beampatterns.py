"""Beampattern tables of an ISAC config, one per regularization weight.

    python3 scripts/beampatterns.py configs/desk/isac.ini --outdir results/beampatterns

Each table comes from realization 0 at the first SNR point. The script also
prints the pattern level at each target relative to the grid median.
"""
import argparse
import dataclasses
from pathlib import Path

from metaopt.harness.config import load_config
from metaopt.harness.runner import beampattern_dump, target_gain, write_table


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("config")
    parser.add_argument("--outdir", default="results/beampatterns")
    parser.add_argument("--resolution", type=int, default=361)
    args = parser.parse_args()
    cfg = load_config(args.config)
    if cfg.suite != "isac":
        raise SystemExit("beampatterns need an isac config")
    outdir = Path(args.outdir)
    for lam in cfg.lambdas:
        table = beampattern_dump(dataclasses.replace(cfg, lambdas=[lam]), args.resolution)
        path = outdir / f"beampattern_lambda_{lam:g}.csv"
        write_table(table, path)
        gains = ", ".join(f"{g:.1f}" for g in target_gain(table, cfg.targets))
        print(f"lambda={lam:g}: target level / median = {gains} -> {path}")


if __name__ == "__main__":
    main()
