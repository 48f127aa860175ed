"""Training runs, ground-truth evaluation, multi-seed aggregation and sweeps."""
from __future__ import annotations

import csv
import dataclasses
import itertools
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from . import data as data_mod
from .losses import BIV, L2, Cutoff, WeightingScheme, batch_loss, scheme_from_dict, scheme_to_dict
from .nn import MlpParams, MlpSpec, backward_from_output, forward, init_params, predict
from .noise_model import (Constant, NoiseSpec, NoisyDataset, VarianceDisturbance,
                          build_noisy_dataset, scale_spec, spec_from_dict, spec_to_dict)
from .optim import AdamConfig, adam_init, adam_step, sgd_step

log = logging.getLogger(__name__)

SMOOTHING_WINDOW = 35
METRICS_HEADER = ["samples_seen", "raw_test_mse", "smoothed_test_mse", "ebs_mean", "skipped_batches"]
SUMMARY_HEADER = ["scheme", "param", "mean_min_loss", "std_min_loss", "diverged_runs"]


@dataclass(frozen=True)
class GroundTruth:
    """L2 training on the clean labels: the best achievable reference."""

    name = "gt"


Scheme = Union[WeightingScheme, GroundTruth]


@dataclass(frozen=True)
class DataSource:
    """Where the clean data comes from and how it is split.

    ``n_test=None`` uses every sample not in the training set.
    """

    source: str = "bike"
    path: str = "data/hour.csv"
    n_train: int = data_mod.BIKE_N_TRAIN
    n_test: int | None = data_mod.BIKE_N_TEST
    seed: int = 0
    n: int = 2000  # synthetic only
    d: int = 10  # synthetic only

    def __post_init__(self):
        if self.source not in ("bike", "synthetic"):
            raise ValueError(f"unknown data source {self.source!r}")


@dataclass(frozen=True)
class TrainConfig:
    """One training run.

    Noise variances and the Cutoff threshold are given in raw label units
    and rescaled by the label variance; BIV's epsilon is in normalized units.
    ``eval_every=None`` evaluates once per epoch.
    """

    scheme: Scheme = BIV()
    noise: NoiseSpec = Constant(0.0)
    D_v: float = 0.0
    dataset: DataSource = DataSource()
    epochs: int = 100
    batch_size: int = 256
    optimizer: str = "adam"
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    hidden: tuple[int, ...] = (100, 50, 20, 10)
    init: str = "fan_in_uniform"
    eval_every: int | None = None
    smoothing_window: int = SMOOTHING_WINDOW
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.eval_every is not None and self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def replace(self, **kw) -> "TrainConfig":
        return dataclasses.replace(self, **kw)


@dataclass
class RunMetrics:
    eval_points: list[tuple[int, float]] = field(default_factory=list)
    smoothed: list[float] = field(default_factory=list)
    min_test_loss: float = math.nan
    raw_min_test_loss: float = math.nan
    skipped_batches: int = 0
    ebs_trace: list[float] = field(default_factory=list)
    ebs_at_eval: list[float] = field(default_factory=list)
    skipped_at_eval: list[int] = field(default_factory=list)
    diverged: bool = False
    seed: int = 0
    params: MlpParams | None = None

    def to_csv(self, path, extra_columns: dict | None = None) -> None:
        extra = extra_columns or {}
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(METRICS_HEADER + list(extra))
            for (seen, raw), sm, ebs, sk in zip(self.eval_points, self.smoothed, self.ebs_at_eval,
                                                 self.skipped_at_eval):
                w.writerow([seen, repr(raw), repr(sm), repr(ebs), sk] + [str(v) for v in extra.values()])


def moving_average(series: Sequence[float], window: int = SMOOTHING_WINDOW) -> np.ndarray:
    """Trailing mean over the last ``min(window, i + 1)`` points."""
    if window < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        return x
    c = np.concatenate([[0.0], np.cumsum(x)])
    i = np.arange(1, x.size + 1)
    lo = np.maximum(i - window, 0)
    return (c[i] - c[lo]) / (i - lo)


def resolve_scheme(scheme: Scheme, label_std: float) -> Scheme:
    """Scheme with its Cutoff threshold moved to normalized-label units."""
    if isinstance(scheme, Cutoff):
        return Cutoff(scheme.C / label_std**2)
    return scheme


def _test_mse(params: MlpParams, test: data_mod.Dataset) -> float:
    r = predict(params, test.features) - test.labels
    with np.errstate(over="ignore", invalid="ignore"):
        return float(np.mean(r * r))


def train(config: TrainConfig, train_set: NoisyDataset, test_set: data_mod.Dataset,
          keep_params: bool = False) -> RunMetrics:
    """Mini-batch training with one weighting scheme; test MSE is on clean labels.

    ``config.scheme`` must already be in normalized units (see
    :func:`resolve_scheme`). Batches filtered empty by Cutoff are skipped and
    counted; a non-finite loss or gradient stops the run with ``diverged``.
    """
    scheme = config.scheme
    X = train_set.features
    y = train_set.true_labels if isinstance(scheme, GroundTruth) else train_set.noisy_labels
    loss_scheme = L2() if isinstance(scheme, GroundTruth) else scheme
    s2 = train_set.sigma2
    n = len(train_set)

    ss = np.random.SeedSequence(config.seed)
    init_seed, shuffle_seed = ss.spawn(2)
    spec = MlpSpec((X.shape[1], *config.hidden, 1))
    params = init_params(spec, init_seed, config.init)
    tensors = params.tensors()
    adam_cfg = AdamConfig(config.learning_rate, config.beta1, config.beta2, config.eps_hat)
    state = adam_init(tensors) if config.optimizer == "adam" else None
    rng = np.random.default_rng(shuffle_seed)

    batches_per_epoch = math.ceil(n / config.batch_size)
    eval_every = config.eval_every or batches_per_epoch
    m = RunMetrics(seed=config.seed)
    ebs_window: list[float] = []
    seen = 0
    step = 0

    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            seen += idx.size
            step += 1
            pred, cache = forward(params, X[idx])
            res = batch_loss(loss_scheme, pred, y[idx], s2[idx])
            if res.empty:
                m.skipped_batches += 1
            elif not (math.isfinite(res.loss) and np.all(np.isfinite(res.grad_wrt_predictions))):
                m.diverged = True
            else:
                grads = backward_from_output(params, cache, res.grad_wrt_predictions).tensors()
                if not all(np.all(np.isfinite(g)) for g in grads):
                    m.diverged = True
                else:
                    if state is not None:
                        state, tensors = adam_step(state, tensors, grads, adam_cfg)
                    else:
                        tensors = sgd_step(tensors, grads, config.learning_rate)
                    params = MlpParams.from_tensors(tensors)
                    m.ebs_trace.append(res.effective_batch_size)
                    ebs_window.append(res.effective_batch_size)
            if m.diverged:
                break
            if step % eval_every == 0:
                mse = _test_mse(params, test_set)
                if not math.isfinite(mse):
                    m.diverged = True
                    break
                m.eval_points.append((seen, mse))
                m.ebs_at_eval.append(float(np.mean(ebs_window)) if ebs_window else 0.0)
                m.skipped_at_eval.append(m.skipped_batches)
                ebs_window = []
        if m.diverged:
            break

    raw = [v for _, v in m.eval_points]
    m.smoothed = moving_average(raw, config.smoothing_window).tolist()
    if raw and not m.diverged:
        m.min_test_loss = float(min(m.smoothed))
        m.raw_min_test_loss = float(min(raw))
    if keep_params:
        m.params = params
    return m


# --- prepared data and paired noisy sets ------------------------------------


@dataclass
class PreparedData:
    train: data_mod.Dataset
    test: data_mod.Dataset
    stats: data_mod.NormalizationStats


@lru_cache(maxsize=8)
def prepare_data(source: DataSource) -> PreparedData:
    """Load, encode and z-normalize (over all samples), then split."""
    if source.source == "bike":
        raw = data_mod.preprocess_bike(data_mod.load_bike_csv(source.path))
    else:
        raw = data_mod.synthetic_dataset(source.n, source.d, source.seed)
    norm, stats = data_mod.normalize(raw)
    tr, te = data_mod.split(norm, source.n_train, source.seed, source.n_test)
    return PreparedData(tr, te, stats)


def noisy_train_set(config: TrainConfig, prepared: PreparedData | None = None) -> NoisyDataset:
    """Noisy training set for ``config.seed``; depends only on data, noise and seed."""
    prepared = prepared or prepare_data(config.dataset)
    return _noisy_cached(config.dataset, config.noise, config.D_v, config.seed, id(prepared), prepared)


_NOISY_CACHE: dict = {}


def _noisy_cached(source, noise, D_v, seed, pid, prepared):
    key = (source, noise, D_v, seed, pid)
    if key not in _NOISY_CACHE:
        if len(_NOISY_CACHE) > 32:
            _NOISY_CACHE.clear()
        spec = scale_spec(noise, 1.0 / prepared.stats.label_std**2)
        dist = VarianceDisturbance(D_v) if D_v > 0 else None
        _NOISY_CACHE[key] = build_noisy_dataset(prepared.train.features, prepared.train.labels,
                                                spec, seed=seed, disturbance=dist)
    return _NOISY_CACHE[key]


def run_one(config: TrainConfig, prepared: PreparedData | None = None) -> RunMetrics:
    """Prepare data, corrupt it for ``config.seed`` and train."""
    prepared = prepared or prepare_data(config.dataset)
    noisy = noisy_train_set(config, prepared)
    cfg = config.replace(scheme=resolve_scheme(config.scheme, prepared.stats.label_std))
    return train(cfg, noisy, prepared.test)


def _run_one_worker(config: TrainConfig) -> RunMetrics:
    os.environ.setdefault("OMP_NUM_THREADS", "1")
    return run_one(config)


def run_many(configs: Sequence[TrainConfig], jobs: int = 1) -> list[RunMetrics]:
    """Run independent configurations, optionally across ``jobs`` processes.

    Per-run failures (exceptions) are returned in place of the metrics.
    """
    if jobs <= 1 or len(configs) <= 1:
        out = []
        for c in configs:
            try:
                out.append(run_one(c))
            except Exception as e:  # noqa: BLE001 - recorded per cell
                log.error("run failed for %s: %s", c, e)
                out.append(e)
        return out
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        futures = [ex.submit(_run_one_worker, c) for c in configs]
        out = []
        for c, f in zip(configs, futures):
            try:
                out.append(f.result())
            except Exception as e:  # noqa: BLE001
                log.error("run failed for %s: %s", c, e)
                out.append(e)
        return out


# --- aggregation ------------------------------------------------------------


@dataclass
class Aggregate:
    mean: float
    std: float
    per_seed: list[RunMetrics]
    diverged_runs: int
    failed_runs: int = 0

    @property
    def available(self) -> bool:
        return not math.isnan(self.mean)

    @property
    def values(self) -> list[float]:
        return [m.min_test_loss for m in self.per_seed if not m.diverged]


def aggregate(results: Sequence[RunMetrics | Exception]) -> Aggregate:
    """Mean and population std of per-seed minimum smoothed test loss.

    Diverged runs are excluded and counted; with nothing left the mean is NaN
    (rendered "N.A.").
    """
    ok = [r for r in results if isinstance(r, RunMetrics)]
    failed = len(results) - len(ok)
    vals = [r.min_test_loss for r in ok if not r.diverged]
    diverged = sum(r.diverged for r in ok)
    if not vals:
        return Aggregate(math.nan, math.nan, ok, diverged, failed)
    return Aggregate(float(np.mean(vals)), float(np.std(vals)), ok, diverged, failed)


def multi_seed(config: TrainConfig, seeds: Sequence[int], jobs: int = 1) -> Aggregate:
    if len(seeds) < 2:
        raise ValueError("multi_seed needs at least two seeds")
    return aggregate(run_many([config.replace(seed=s) for s in seeds], jobs))


def scheme_label(scheme: Scheme) -> tuple[str, str]:
    if isinstance(scheme, BIV):
        return "biv", f"epsilon={scheme.epsilon:g}"
    if isinstance(scheme, Cutoff):
        return "cutoff", f"C={scheme.C:g}"
    return scheme.name, ""


@dataclass
class ComparisonRow:
    scheme: str
    param: str
    agg: Aggregate


@dataclass
class ComparisonTable:
    rows: list[ComparisonRow]

    def __getitem__(self, key) -> Aggregate:
        for r in self.rows:
            if key in ((r.scheme, r.param), r.scheme, f"{r.scheme}:{r.param}"):
                return r.agg
        raise KeyError(key)

    def to_csv(self, path, extra_columns: dict | None = None) -> None:
        extra = extra_columns or {}
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SUMMARY_HEADER + list(extra))
            for r in self.rows:
                mean = "N.A." if not r.agg.available else repr(r.agg.mean)
                std = "N.A." if not r.agg.available else repr(r.agg.std)
                w.writerow([r.scheme, r.param, mean, std, r.agg.diverged_runs]
                           + [str(v) for v in extra.values()])

    def format(self) -> str:
        lines = [f"{'scheme':<10}{'param':<28}{'min test loss':>22}  diverged"]
        for r in self.rows:
            v = "N.A." if not r.agg.available else f"{r.agg.mean:.4f} +/- {r.agg.std:.4f}"
            lines.append(f"{r.scheme:<10}{r.param:<28}{v:>22}  {r.agg.diverged_runs}")
        return "\n".join(lines)


def compare_schemes(base: TrainConfig, schemes: Sequence[Scheme], seeds: Sequence[int],
                    jobs: int = 1) -> ComparisonTable:
    """Every scheme on the same noisy training set per seed (paired design)."""
    configs = [base.replace(scheme=s, seed=seed) for s in schemes for seed in seeds]
    results = run_many(configs, jobs)
    rows = []
    k = len(seeds)
    for i, s in enumerate(schemes):
        name, param = scheme_label(s)
        rows.append(ComparisonRow(name, param, aggregate(results[i * k:(i + 1) * k])))
    return ComparisonTable(rows)


# --- grids -------------------------------------------------------------------

SWEEP_KEYS = ("scheme", "epsilon", "C", "alpha", "p", "V", "V_h", "mu_P", "D_v", "batch_size",
              "learning_rate", "epochs")


def apply_overrides(base: TrainConfig, cell: dict) -> TrainConfig:
    """Config with sweep-cell values substituted (scheme and noise parameters included)."""
    cfg = base
    scheme_d = scheme_to_dict(base.scheme) if not isinstance(base.scheme, GroundTruth) else {"scheme": "gt"}
    noise_d = spec_to_dict(base.noise)
    top = {}
    for key, val in cell.items():
        if key == "scheme":
            scheme_d = {"scheme": val}
        elif key in ("epsilon", "C"):
            pass
        elif key in ("alpha", "p", "V", "V_h", "mu_P"):
            noise_d[key] = val
        elif key in ("D_v", "batch_size", "learning_rate", "epochs"):
            top[key] = val
        else:
            raise KeyError(f"unknown sweep key {key!r}")
    name = scheme_d["scheme"]
    if name == "biv":
        scheme_d = {"scheme": "biv", "epsilon": cell.get("epsilon", scheme_d.get("epsilon", 0.05))}
    elif name == "cutoff":
        C = cell.get("C", scheme_d.get("C"))
        if C is None:
            raise ValueError("cutoff scheme needs C")
        scheme_d = {"scheme": "cutoff", "C": C}
    else:
        scheme_d = {"scheme": name}
    scheme = GroundTruth() if name == "gt" else scheme_from_dict(scheme_d)
    return cfg.replace(scheme=scheme, noise=spec_from_dict(noise_d), **top)


def expand_grid(grid: dict) -> list[dict]:
    keys = [k for k in grid if grid[k]]
    for k in keys:
        if k not in SWEEP_KEYS:
            raise KeyError(f"unknown sweep key {k!r}; allowed: {SWEEP_KEYS}")
    if not keys:
        return []
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def cell_label(cell: dict) -> str:
    return ";".join(f"{k}={v:g}" if isinstance(v, (int, float)) else f"{k}={v}"
                    for k, v in cell.items() if k != "scheme")


@dataclass
class SweepResult:
    cells: list[dict]
    configs: list[TrainConfig]
    table: ComparisonTable
    errors: dict[int, str]
    per_run: list[list[RunMetrics | Exception]]


def run_grid(base: TrainConfig, grid: dict, seeds: Sequence[int], jobs: int = 1) -> SweepResult:
    """Full Cartesian grid x seeds, paired noise per seed; failing cells are recorded, not raised."""
    cells = expand_grid(grid)
    if not cells:
        log.warning("empty sweep grid: nothing to run")
        return SweepResult([], [], ComparisonTable([]), {}, [])
    configs, errors = [], {}
    for i, c in enumerate(cells):
        try:
            configs.append(apply_overrides(base, c))
        except (ValueError, KeyError, TypeError) as e:
            errors[i] = str(e)
            configs.append(None)
    flat = [(i, cfg.replace(seed=s)) for i, cfg in enumerate(configs) if cfg is not None for s in seeds]
    results = run_many([c for _, c in flat], jobs)
    per_cell: list[list] = [[] for _ in cells]
    for (i, _), r in zip(flat, results):
        per_cell[i].append(r)
    rows = []
    for i, (cell, cfg) in enumerate(zip(cells, configs)):
        if cfg is None:
            name = str(cell.get("scheme", "?"))
            rows.append(ComparisonRow(name, cell_label(cell), Aggregate(math.nan, math.nan, [], 0, len(seeds))))
            continue
        fails = [r for r in per_cell[i] if isinstance(r, Exception)]
        if fails:
            errors[i] = "; ".join(sorted({str(e) for e in fails}))
        name, sparam = scheme_label(cfg.scheme)
        label = cell_label(cell)
        if sparam and sparam.split("=")[0] not in cell:
            label = ";".join(filter(None, [sparam, label]))
        rows.append(ComparisonRow(name, label, aggregate(per_cell[i])))
    return SweepResult(cells, configs, ComparisonTable(rows), errors, per_cell)


def write_metrics(metrics: RunMetrics, path, **provenance) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    metrics.to_csv(path, provenance)
    return path
