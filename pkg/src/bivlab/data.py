"""Datasets: UCI Bike Sharing (hourly) preprocessing and a synthetic regression task."""
from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

BIKE_COLUMNS = (
    "dteday", "season", "yr", "mnth", "hr", "holiday", "weekday", "workingday",
    "weathersit", "temp", "atemp", "hum", "windspeed", "casual", "registered", "cnt",
)
BIKE_FEATURES = (
    "year", "date_cos", "date_sin", "hour_cos", "hour_sin",
    *(f"weekday_{i}" for i in range(7)),
    "holiday", "workingday", "weathersit", "temp", "atemp", "hum", "windspeed",
)
BIKE_N_TRAIN = 7000
BIKE_N_TEST = 3379
BIKE_DAYS = 730


class DataError(ValueError):
    pass


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        self.labels = np.asarray(self.labels, dtype=float).reshape(-1)
        if not self.feature_names:
            self.feature_names = [f"x{j}" for j in range(self.features.shape[1])]
        if self.features.shape[0] != self.labels.size:
            raise DataError("features and labels disagree on the number of samples")
        if len(self.feature_names) != self.features.shape[1]:
            raise DataError("one feature name per column required")

    def __len__(self) -> int:
        return self.labels.size

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], list(self.feature_names))

    def to_csv(self, path, extra_columns: dict | None = None) -> None:
        extra = extra_columns or {}
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(list(self.feature_names) + ["label"] + list(extra))
            for x, y in zip(self.features, self.labels):
                w.writerow([repr(float(v)) for v in x] + [repr(float(y))] + [str(v) for v in extra.values()])

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if "label" not in header:
                raise DataError(f"{path}: no 'label' column")
            li = header.index("label")
            rows = list(reader)
        names = header[:li]
        X = np.array([[float(v) for v in r[:li]] for r in rows]).reshape(len(rows), li)
        y = np.array([float(r[li]) for r in rows])
        return cls(X, y, names)


@dataclass
class BikeRecords:
    """Raw hourly records, one array per UCI column (``dteday`` as dates)."""

    dteday: list[dt.date]
    columns: dict[str, np.ndarray]

    def __len__(self) -> int:
        return len(self.dteday)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]


def load_bike_csv(path) -> BikeRecords:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file")
        missing = [c for c in BIKE_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise DataError(f"{path}: missing columns {missing}")
        dates: list[dt.date] = []
        values: dict[str, list[float]] = {c: [] for c in BIKE_COLUMNS[1:]}
        for i, row in enumerate(reader):
            try:
                dates.append(dt.date.fromisoformat(row["dteday"]))
                for c in BIKE_COLUMNS[1:]:
                    v = float(row[c])
                    if not math.isfinite(v):
                        raise ValueError(f"non-finite {c}")
                    values[c].append(v)
            except (TypeError, ValueError) as e:
                raise DataError(f"{path}: malformed row {i}: {e}") from None
    if not dates:
        raise DataError(f"{path}: no records")
    return BikeRecords(dates, {c: np.array(v) for c, v in values.items()})


def cyclic(values, period: float) -> tuple[np.ndarray, np.ndarray]:
    angle = 2.0 * np.pi * np.asarray(values, dtype=float) / period
    return np.cos(angle), np.sin(angle)


def preprocess_bike(records: BikeRecords) -> Dataset:
    """The 19-feature encoding of the hourly records; label is ``cnt``.

    Day index 1..730 is mapped linearly onto [0, 4*pi] (two yearly cycles)
    and the hour onto [0, 2*pi]; both are given as (cos, sin) pairs. Weekday
    becomes a one-hot vector; season and month are dropped.
    """
    first = min(records.dteday)
    day_index = np.array([(d - first).days + 1 for d in records.dteday], dtype=float)
    # (day - 1)/730 * 4pi == 2pi * (day - 1) / 365
    date_cos, date_sin = cyclic(day_index - 1.0, BIKE_DAYS / 2)
    hour_cos, hour_sin = cyclic(records["hr"], 24.0)
    weekday = records["weekday"].astype(int)
    if np.any((weekday < 0) | (weekday > 6)):
        raise DataError("weekday outside 0..6")
    onehot = np.eye(7)[weekday]
    X = np.column_stack([
        records["yr"], date_cos, date_sin, hour_cos, hour_sin, onehot,
        records["holiday"], records["workingday"], records["weathersit"],
        records["temp"], records["atemp"], records["hum"], records["windspeed"],
    ])
    return Dataset(X, records["cnt"].astype(float), list(BIKE_FEATURES))


@dataclass
class NormalizationStats:
    feature_means: np.ndarray
    feature_stds: np.ndarray
    label_mean: float
    label_std: float
    kept_features: list[str] = field(default_factory=list)
    dropped_features: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "feature_means": self.feature_means.tolist(),
            "feature_stds": self.feature_stds.tolist(),
            "label_mean": self.label_mean,
            "label_std": self.label_std,
            "kept_features": self.kept_features,
            "dropped_features": self.dropped_features,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        return cls(np.array(d["feature_means"]), np.array(d["feature_stds"]),
                   float(d["label_mean"]), float(d["label_std"]),
                   list(d.get("kept_features", [])), list(d.get("dropped_features", [])))

    def save(self, path, **extra) -> None:
        Path(path).write_text(json.dumps({**self.to_dict(), **extra}, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "NormalizationStats":
        return cls.from_dict(json.loads(Path(path).read_text()))


def normalize(dataset: Dataset) -> tuple[Dataset, NormalizationStats]:
    """Z-score every feature and the label with population statistics.

    Constant feature columns are dropped (with a warning); a constant label
    is an error.
    """
    X, y = dataset.features, dataset.labels
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    keep = sd > 0
    dropped = [n for n, k in zip(dataset.feature_names, keep) if not k]
    if dropped:
        log.warning("dropping constant feature columns: %s", dropped)
    y_mu, y_sd = float(y.mean()), float(y.std())
    if y_sd == 0:
        raise DataError("label column is constant")
    kept = [n for n, k in zip(dataset.feature_names, keep) if k]
    Xn = (X[:, keep] - mu[keep]) / sd[keep]
    stats = NormalizationStats(mu[keep], sd[keep], y_mu, y_sd, kept, dropped)
    return Dataset(Xn, (y - y_mu) / y_sd, kept), stats


def denormalize(dataset: Dataset, stats: NormalizationStats) -> Dataset:
    X = dataset.features * stats.feature_stds + stats.feature_means
    return Dataset(X, dataset.labels * stats.label_std + stats.label_mean, list(dataset.feature_names))


def scale_noise_quantities(sigma2s=None, cutoff_C=None, epsilon=None, label_std: float = 1.0):
    """Move raw-label variances and cutoff into normalized-label units.

    Variances and ``C`` are divided by ``label_std**2``. ``epsilon`` is
    already expressed in normalized units and passes through.
    """
    if label_std <= 0:
        raise ValueError("label_std must be positive")
    f = 1.0 / label_std**2
    s = None if sigma2s is None else np.asarray(sigma2s, dtype=float) * f
    c = None if cutoff_C is None else cutoff_C * f
    return s, c, epsilon


def split(dataset: Dataset, n_train: int, seed: int, n_test: int | None = None) -> tuple[Dataset, Dataset]:
    """Random train/test split without replacement.

    The test set takes ``n_test`` of the remaining samples (all of them by
    default).
    """
    n = len(dataset)
    if not 0 < n_train < n:
        raise ValueError(f"n_train must be in (0, {n}), got {n_train}")
    if n_test is None:
        n_test = n - n_train
    if n_test <= 0 or n_train + n_test > n:
        raise ValueError(f"cannot draw {n_train}+{n_test} samples from {n}")
    perm = np.random.default_rng(seed).permutation(n)
    return dataset.subset(np.sort(perm[:n_train])), dataset.subset(np.sort(perm[n_train:n_train + n_test]))


def friedman_label(X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(X)
    return (10.0 * np.sin(np.pi * X[:, 0] * X[:, 1]) + 20.0 * (X[:, 2] - 0.5) ** 2
            + 10.0 * X[:, 3] + 5.0 * X[:, 4])


def synthetic_dataset(n: int, d: int, seed: int) -> Dataset:
    """Uniform features on [0, 1]^d with a Friedman-style nonlinear target."""
    if n <= 0 or d < 5:
        raise ValueError("need n > 0 and d >= 5")
    X = np.random.default_rng(seed).random((n, d))
    return Dataset(X, friedman_label(X), [f"x{j}" for j in range(d)])
