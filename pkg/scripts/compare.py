"""Paired comparisons from result CSVs written by ``metaopt run``.

    python3 scripts/compare.py results/desk_hrsma.csv results/desk_sdma.csv
    python3 scripts/compare.py results/desk_bdris.csv results/desk_ris.csv

Prints the mean ESR of each file per grid point and the relative gain of the
first over the second, matching rows on (realization, snr_db, lambda).
"""
import argparse

import numpy as np

from metaopt.harness.runner import read_csv


def keyed(path):
    return {(r.realization, r.snr_db, r.lam): r for r in read_csv(path)}


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("first")
    parser.add_argument("second")
    args = parser.parse_args()
    a, b = keyed(args.first), keyed(args.second)
    shared = sorted(set(a) & set(b))
    if not shared:
        raise SystemExit("no paired rows")
    points = sorted({k[1:] for k in shared})
    name_a, name_b = a[shared[0]].suite, b[shared[0]].suite
    print(f"{'snr_db':>8} {'lambda':>8} {name_a:>10} {name_b:>10} {'gain %':>8} {'wins':>7}")
    for snr, lam in points:
        keys = [k for k in shared if k[1:] == (snr, lam)]
        ea = np.array([a[k].esr for k in keys])
        eb = np.array([b[k].esr for k in keys])
        gain = 100 * (ea.mean() / eb.mean() - 1)
        print(f"{snr:8g} {lam:8g} {ea.mean():10.4f} {eb.mean():10.4f} {gain:8.1f} "
              f"{np.sum(ea >= eb):3d}/{len(keys)}")


if __name__ == "__main__":
    main()
