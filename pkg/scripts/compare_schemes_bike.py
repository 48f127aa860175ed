"""Bike Sharing comparison of every weighting scheme for alpha in {1, 0.5, 0.25}.

Prints mean +/- std of the lowest smoothed test MSE over the seeds next to
the reference values in bivlab.experiments, and writes one CSV per alpha.

    python scripts/compare_schemes_bike.py --out runs/schemes --jobs 4
"""
import argparse
import logging
from pathlib import Path

from bivlab import experiments as ex
from bivlab.harness import compare_schemes


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data", default=str(ex.DEFAULT_BIKE_CSV))
    ap.add_argument("--alphas", type=float, nargs="+", default=[1.0, 0.5, 0.25])
    ap.add_argument("--seeds", type=int, nargs="+", default=list(ex.SEEDS))
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="runs/schemes")
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    schemes = ex.all_schemes()
    for alpha in args.alphas:
        table = compare_schemes(ex.bike_base(alpha, args.data), list(schemes.values()), args.seeds, args.jobs)
        table.to_csv(out / f"alpha_{alpha:g}.csv", {"alpha": alpha, "seeds": " ".join(map(str, args.seeds))})
        print(f"\nalpha = {alpha:g}")
        ref = ex.REFERENCE_BIKE.get(alpha, {})
        for key, row in zip(schemes, table.rows):
            a = row.agg
            got = "N.A." if not a.available else f"{a.mean:.3f} +/- {a.std:.3f}"
            want = ref.get(key)
            print(f"  {key:<9}{got:>18}   reference {'N.A.' if want is None else f'{want:.3f}'}"
                  f"   diverged {a.diverged_runs}/{len(args.seeds)}")


if __name__ == "__main__":
    main()
