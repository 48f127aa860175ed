"""Bike Sharing robustness sweeps: epsilon, variance disturbance D_v, batch size, and noise family.

    python scripts/sweeps.py epsilon --jobs 4
    python scripts/sweeps.py disturbance
    python scripts/sweeps.py batch --seeds 0 1 2
    python scripts/sweeps.py distributions
"""
import argparse
import logging
from pathlib import Path

from bivlab import experiments as ex
from bivlab.harness import ComparisonRow, ComparisonTable, compare_schemes, multi_seed, run_grid
from bivlab.losses import BIV, L2


def epsilon(args):
    return run_grid(ex.bike_base(1.0, args.data), {"epsilon": list(ex.EPSILON_GRID)}, args.seeds, args.jobs).table


def disturbance(args):
    grid = {"scheme": ["l2", "biv"], "D_v": list(ex.DV_GRID)}
    return run_grid(ex.bike_base(1.0, args.data), grid, args.seeds, args.jobs).table


def batch(args):
    grid = {"scheme": ["l2", "biv"], "batch_size": list(ex.BATCH_GRID)}
    return run_grid(ex.bike_base(1.0, args.data), grid, args.seeds, args.jobs).table


def distributions(args):
    base = ex.bike_base(1.0, args.data).replace(scheme=L2())
    rows = [ComparisonRow("l2", name, multi_seed(base.replace(noise=spec), args.seeds, args.jobs))
            for name, spec in ex.equal_mean_noise().items()]
    return ComparisonTable(rows)


def synthetic(args):
    return compare_schemes(ex.synthetic_base(), [L2(), BIV(0.05)], args.seeds, args.jobs)


SWEEPS = {"epsilon": epsilon, "disturbance": disturbance, "batch": batch,
          "distributions": distributions, "synthetic": synthetic}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("sweep", choices=sorted(SWEEPS))
    ap.add_argument("--data", default=str(ex.DEFAULT_BIKE_CSV))
    ap.add_argument("--seeds", type=int, nargs="+", default=list(ex.SEEDS))
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="runs/sweeps")
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)
    table = SWEEPS[args.sweep](args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table.to_csv(out / f"{args.sweep}.csv", {"seeds": " ".join(map(str, args.seeds))})
    print(table.format())


if __name__ == "__main__":
    main()
