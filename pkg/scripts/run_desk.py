"""Run the desk-scale configs and write one CSV per scenario under results/.

    python3 scripts/run_desk.py                 # every config in configs/desk
    python3 scripts/run_desk.py hrsma sdma      # a subset
    python3 scripts/run_desk.py --configs configs/paper --parallel 8
"""
import argparse
import time
from pathlib import Path

from metaopt.harness.config import load_config
from metaopt.harness.runner import run_scenario, summarize, tradeoff_sweep, write_csv

ROOT = Path(__file__).resolve().parents[1]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("names", nargs="*", help="config stems; default all")
    parser.add_argument("--configs", default=str(ROOT / "configs" / "desk"))
    parser.add_argument("--parallel", type=int, default=1)
    args = parser.parse_args()
    paths = sorted(Path(args.configs).glob("*.ini"))
    if args.names:
        paths = [p for p in paths if p.stem in args.names]
    for path in paths:
        cfg = load_config(path)
        start = time.perf_counter()
        run = tradeoff_sweep if cfg.suite == "isac" else run_scenario
        records = run(cfg, args.parallel)
        out = ROOT / cfg.output if not Path(cfg.output).is_absolute() else Path(cfg.output)
        write_csv(records, out)
        print(f"{path.name}: {len(records)} runs in {time.perf_counter() - start:.0f}s -> {out}")
        for row in summarize(records):
            print(f"  snr_db={row['snr_db']:g} lambda={row['lambda']:g} esr={row['esr']:.4f} "
                  f"probing_power={row['probing_power']:.4g}")


if __name__ == "__main__":
    main()
