"""``bivlab`` command line: prepare, corrupt, train, sweep, report.

Exit codes: 0 success, 2 config error, 3 data error, 4 a run diverged.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

from . import harness
from .config import ConfigError, RunConfigFile
from .data import DataError, Dataset, NormalizationStats
from .losses import BIV
from .noise_model import NoisyDataset, VarianceDisturbance, build_noisy_dataset, scale_spec

log = logging.getLogger("bivlab")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4
EPSILON_SOFT_RANGE = (0.001, 1.0)


class Paths:
    def __init__(self, root: Path):
        self.root = root
        self.prepared = root / "prepared"
        self.noisy = root / "noisy"
        self.metrics = root / "metrics"

    @property
    def train_csv(self):
        return self.prepared / "train.csv"

    @property
    def test_csv(self):
        return self.prepared / "test.csv"

    @property
    def stats_json(self):
        return self.prepared / "stats.json"

    def noisy_csv(self, seed: int) -> Path:
        return self.noisy / f"seed_{seed}.csv"


def _output_root(args, cfg: RunConfigFile) -> Path:
    if args.out:
        return Path(args.out)
    if cfg.output:
        return Path(cfg.output)
    return Path(os.environ.get("BIVLAB_OUT", "runs"))


def _seeds(args, cfg: RunConfigFile) -> list[int]:
    return [args.seed] if args.seed is not None else list(cfg.seeds)


def _provenance(cfg: RunConfigFile, seed) -> dict:
    return {"config_hash": cfg.hash(), "seed": seed}


def _run_tag(scheme) -> str:
    name, param = harness.scheme_label(scheme)
    return f"{name}_{param.replace('=', '')}" if param else name


def cmd_prepare(cfg: RunConfigFile, root: Path, args) -> int:
    paths = Paths(root)
    paths.prepared.mkdir(parents=True, exist_ok=True)
    prepared = harness.prepare_data(cfg.base.dataset)
    tag = _provenance(cfg, cfg.base.dataset.seed)
    prepared.train.to_csv(paths.train_csv, tag)
    prepared.test.to_csv(paths.test_csv, tag)
    prepared.stats.save(paths.stats_json, **tag)
    print(f"prepared {len(prepared.train)} train / {len(prepared.test)} test samples, "
          f"{prepared.train.features.shape[1]} features -> {paths.prepared}")
    return EXIT_OK


def _load_prepared(paths: Paths) -> tuple[Dataset, Dataset, NormalizationStats]:
    for p in (paths.train_csv, paths.test_csv, paths.stats_json):
        if not p.exists():
            raise DataError(f"{p} not found; run `bivlab prepare` with this config first")
    train = Dataset.from_csv(paths.train_csv)
    test = Dataset.from_csv(paths.test_csv)
    # provenance columns are written after "label" and ignored on load
    return train, test, NormalizationStats.load(paths.stats_json)


def cmd_corrupt(cfg: RunConfigFile, root: Path, args) -> int:
    paths = Paths(root)
    train, _, stats = _load_prepared(paths)
    paths.noisy.mkdir(parents=True, exist_ok=True)
    spec = scale_spec(cfg.base.noise, 1.0 / stats.label_std**2)
    dist = VarianceDisturbance(cfg.base.D_v) if cfg.base.D_v > 0 else None
    for seed in _seeds(args, cfg):
        noisy = build_noisy_dataset(train.features, train.labels, spec, seed, dist)
        noisy.to_csv(paths.noisy_csv(seed), _provenance(cfg, seed))
        print(f"seed {seed}: mean sigma2 {noisy.sigma2.mean():.4g} (normalized units) -> {paths.noisy_csv(seed)}")
    return EXIT_OK


def _warn_epsilon(scheme) -> None:
    if isinstance(scheme, BIV):
        lo, hi = EPSILON_SOFT_RANGE
        if not lo <= scheme.epsilon <= hi:
            log.warning("BIV epsilon=%g is outside [%g, %g] (normalized-label units)", scheme.epsilon, lo, hi)


def cmd_train(cfg: RunConfigFile, root: Path, args) -> int:
    paths = Paths(root)
    _, test, stats = _load_prepared(paths)
    _warn_epsilon(cfg.base.scheme)
    seeds = _seeds(args, cfg)
    missing = [s for s in seeds if not paths.noisy_csv(s).exists()]
    if missing:
        raise DataError(f"no noisy dataset for seed(s) {missing}; run `bivlab corrupt` first")
    scheme = harness.resolve_scheme(cfg.base.scheme, stats.label_std)
    paths.metrics.mkdir(parents=True, exist_ok=True)
    results = []
    for seed in seeds:
        noisy = NoisyDataset.from_csv(paths.noisy_csv(seed))
        m = harness.train(cfg.base.replace(scheme=scheme, seed=seed), noisy, test)
        out = harness.write_metrics(m, paths.metrics / f"{_run_tag(cfg.base.scheme)}_seed{seed}.csv",
                                    **_provenance(cfg, seed))
        status = "DIVERGED" if m.diverged else f"min smoothed test MSE {m.min_test_loss:.4f}"
        print(f"seed {seed}: {status} -> {out}")
        results.append(m)
    agg = harness.aggregate(results)
    name, param = harness.scheme_label(cfg.base.scheme)
    table = harness.ComparisonTable([harness.ComparisonRow(name, param, agg)])
    table.to_csv(root / f"summary_{_run_tag(cfg.base.scheme)}.csv",
                 {"config_hash": cfg.hash(), "seeds": " ".join(map(str, seeds))})
    print(table.format())
    return EXIT_DIVERGED if agg.diverged_runs else EXIT_OK


def cmd_sweep(cfg: RunConfigFile, root: Path, args) -> int:
    if not cfg.sweep or not harness.expand_grid(cfg.sweep):
        log.warning("config has no sweep grid; nothing to do")
        return EXIT_OK
    for eps in cfg.sweep.get("epsilon", []):
        _warn_epsilon(BIV(eps))
    seeds = _seeds(args, cfg)
    res = harness.run_grid(cfg.base, cfg.sweep, seeds, jobs=args.jobs)
    root.mkdir(parents=True, exist_ok=True)
    (root / "metrics").mkdir(exist_ok=True)
    for i, (cell, runs) in enumerate(zip(res.cells, res.per_run)):
        for seed, m in zip(seeds, runs):
            if isinstance(m, harness.RunMetrics):
                harness.write_metrics(m, root / "metrics" / f"cell{i:03d}_seed{seed}.csv", **_provenance(cfg, seed))
    res.table.to_csv(root / "sweep_summary.csv",
                     {"config_hash": cfg.hash(), "seeds": " ".join(map(str, seeds))})
    for i, msg in res.errors.items():
        log.error("cell %d (%s) failed: %s", i, harness.cell_label(res.cells[i]), msg)
    print(res.table.format())
    diverged = any(r.agg.diverged_runs for r in res.table.rows)
    return EXIT_DIVERGED if diverged else EXIT_OK


def cmd_report(cfg: RunConfigFile | None, root: Path, args) -> int:
    files = sorted(root.glob("summary_*.csv")) + sorted(root.glob("sweep_summary.csv"))
    if not files:
        raise DataError(f"no summary CSVs under {root}")
    for f in files:
        print(f"== {f}")
        with open(f, newline="") as fh:
            rows = list(csv.DictReader(fh))
        for r in rows:
            val = r["mean_min_loss"]
            if val != "N.A.":
                val = f"{float(val):.4f} +/- {float(r['std_min_loss']):.4f}"
            print(f"  {r['scheme']:<8}{r['param']:<32}{val:>22}  diverged={r['diverged_runs']}")
    return EXIT_OK


COMMANDS = {"prepare": cmd_prepare, "corrupt": cmd_corrupt, "train": cmd_train,
            "sweep": cmd_sweep, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bivlab", description="Batch inverse-variance training experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=(name != "report"), help="run-config JSON file")
        p.add_argument("--seed", type=int, help="run a single seed instead of the configured list")
        p.add_argument("--out", help="output directory (default: config 'output', then $BIVLAB_OUT, then ./runs)")
        p.add_argument("--jobs", type=int, default=1, help="parallel runs for sweeps")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfigFile.load(args.config) if args.config else None
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg is None:
        root = Path(args.out or os.environ.get("BIVLAB_OUT", "runs"))
    else:
        root = _output_root(args, cfg)
    try:
        return COMMANDS[args.command](cfg, root, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())
