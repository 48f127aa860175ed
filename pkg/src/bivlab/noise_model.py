"""Heteroscedastic label-noise generation.

Noise is produced in two independent steps: a variance ``sigma2`` is drawn
from a distribution ``P(sigma2)`` with support on ``[0, inf)``, then the
label is corrupted with a zero-mean Gaussian of that variance. Variances are
never correlated with the features.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

# Slack for V == V_max and a_h == 0 edge cases that only miss by rounding.
_BOUND_RTOL = 1e-12


class NoiseSpecError(ValueError):
    pass


def uniform_bounds(mu_P: float, V: float) -> tuple[float, float]:
    """Bounds ``(a, b)`` of the uniform law with mean ``mu_P`` and variance ``V``.

    Solves ``mu_P = (a + b) / 2`` and ``V = (b - a)**2 / 12``. The largest
    admissible ``V`` is ``mu_P**2 / 3`` (``a = 0``, ``b = 2 mu_P``).
    """
    if mu_P <= 0:
        raise NoiseSpecError(f"mu_P must be positive, got {mu_P}")
    if V < 0:
        raise NoiseSpecError(f"V must be nonnegative, got {V}")
    v_max = mu_P**2 / 3.0
    if V > v_max * (1 + _BOUND_RTOL):
        raise NoiseSpecError(f"V={V} exceeds V_max={v_max} (lower bound would be negative)")
    half = math.sqrt(3.0 * min(V, v_max))
    return max(mu_P - half, 0.0), mu_P + half


def binary_high_regime(mu_P: float, p: float, mu_l: float = 0.5, V_h: float = 0.0) -> tuple[float, float]:
    """Bounds ``(a_h, b_h)`` of the high-noise component of the binary-uniform mixture.

    The high-regime mean is chosen so the mixture mean equals ``mu_P``:
    ``mu_h = (mu_P - p * mu_l) / (1 - p)``.
    """
    if not 0.0 <= p < 1.0:
        raise NoiseSpecError(f"p must lie in [0, 1), got {p}")
    if mu_P <= p * mu_l:
        raise NoiseSpecError(f"mu_P={mu_P} must exceed p*mu_l={p * mu_l}")
    if V_h < 0:
        raise NoiseSpecError(f"V_h must be nonnegative, got {V_h}")
    mu_h = (mu_P - p * mu_l) / (1.0 - p)
    half = math.sqrt(3.0 * V_h)
    a_h = mu_h - half
    if a_h < -_BOUND_RTOL * mu_h:
        raise NoiseSpecError(f"V_h={V_h} too large: high-regime lower bound {a_h} < 0")
    return max(a_h, 0.0), mu_h + half


@dataclass(frozen=True)
class Constant:
    sigma2: float

    def __post_init__(self):
        if self.sigma2 < 0:
            raise NoiseSpecError("sigma2 must be nonnegative")

    @property
    def mean(self) -> float:
        return self.sigma2


@dataclass(frozen=True)
class Uniform:
    mu_P: float
    V: float

    def __post_init__(self):
        uniform_bounds(self.mu_P, self.V)

    @property
    def bounds(self) -> tuple[float, float]:
        return uniform_bounds(self.mu_P, self.V)

    @property
    def mean(self) -> float:
        return self.mu_P


@dataclass(frozen=True)
class BinaryUniform:
    """Low-noise ``U(0, 2 mu_l)`` with probability ``p``, else ``U(a_h, b_h)``."""

    mu_P: float
    p: float
    V_h: float = 0.0
    mu_l: float = 0.5

    def __post_init__(self):
        binary_high_regime(self.mu_P, self.p, self.mu_l, self.V_h)

    @property
    def high_bounds(self) -> tuple[float, float]:
        return binary_high_regime(self.mu_P, self.p, self.mu_l, self.V_h)

    @property
    def mean(self) -> float:
        return self.mu_P


@dataclass(frozen=True)
class Gamma:
    """Gamma law with shape ``alpha`` and rate ``alpha / mu_P`` (mean ``mu_P``)."""

    alpha: float
    mu_P: float

    def __post_init__(self):
        if self.alpha <= 0:
            raise NoiseSpecError(f"alpha must be positive, got {self.alpha}")
        if self.mu_P <= 0:
            raise NoiseSpecError(f"mu_P must be positive, got {self.mu_P}")

    @property
    def rate(self) -> float:
        return self.alpha / self.mu_P

    @property
    def mean(self) -> float:
        return self.mu_P


NoiseSpec = Union[Constant, Uniform, BinaryUniform, Gamma]


def scale_spec(spec: NoiseSpec, factor: float) -> NoiseSpec:
    """Express ``spec`` in units where every variance is multiplied by ``factor``.

    A variance ``s`` becomes ``factor * s``; variances-of-variances scale by
    ``factor**2``. Used to move raw-label specs into normalized-label units.
    """
    if factor <= 0:
        raise ValueError("factor must be positive")
    if isinstance(spec, Constant):
        return Constant(spec.sigma2 * factor)
    if isinstance(spec, Uniform):
        return Uniform(spec.mu_P * factor, spec.V * factor**2)
    if isinstance(spec, BinaryUniform):
        return BinaryUniform(spec.mu_P * factor, spec.p, spec.V_h * factor**2, spec.mu_l * factor)
    if isinstance(spec, Gamma):
        return Gamma(spec.alpha, spec.mu_P * factor)
    raise TypeError(f"unknown noise spec {spec!r}")


# --- Gamma sampling -------------------------------------------------------


def _mt_standard_gamma(shape: float, rng: np.random.Generator) -> float:
    # Marsaglia & Tsang (2000); requires shape >= 1.
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = rng.standard_normal()
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = 1.0 - rng.random()
        if math.log(u) < 0.5 * x * x + d * (1.0 - v + math.log(v)):
            return d * v


def standard_gamma(shape: float, rng: np.random.Generator) -> float:
    """One draw from Gamma(shape, rate=1).

    For ``shape < 1`` a Gamma(shape + 1) draw is multiplied by ``U**(1/shape)``.
    """
    if shape >= 1.0:
        return _mt_standard_gamma(shape, rng)
    g = _mt_standard_gamma(shape + 1.0, rng)
    u = 1.0 - rng.random()  # (0, 1]: keeps the draw strictly positive
    return g * u ** (1.0 / shape)


def standard_gamma_array(shape: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorized counterpart of :func:`standard_gamma` for bulk draws."""
    boost = shape < 1.0
    s = shape + 1.0 if boost else shape
    d = s - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    out = np.empty(size)
    todo = np.arange(size)
    while todo.size:
        x = rng.standard_normal(todo.size)
        v = 1.0 + c * x
        u = 1.0 - rng.random(todo.size)
        pos = v > 0.0
        v3 = np.where(pos, v, 1.0) ** 3
        accept = pos & (np.log(u) < 0.5 * x * x + d * (1.0 - v3 + np.log(v3)))
        out[todo[accept]] = d * v3[accept]
        todo = todo[~accept]
    if boost:
        out *= (1.0 - rng.random(size)) ** (1.0 / shape)
    return out


# --- variance sampling ----------------------------------------------------


def sample_variance(spec: NoiseSpec, rng: np.random.Generator) -> float:
    """Draw a single noise variance from ``P(sigma2)``."""
    if isinstance(spec, Constant):
        return float(spec.sigma2)
    if isinstance(spec, Uniform):
        a, b = spec.bounds
        return a + (b - a) * rng.random()
    if isinstance(spec, BinaryUniform):
        if rng.random() < spec.p:
            return 2.0 * spec.mu_l * rng.random()
        a, b = spec.high_bounds
        return a + (b - a) * rng.random()
    if isinstance(spec, Gamma):
        return standard_gamma(spec.alpha, rng) / spec.rate
    raise TypeError(f"unknown noise spec {spec!r}")


def sample_variances(spec: NoiseSpec, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``size`` i.i.d. variances from ``P(sigma2)`` with one stream."""
    if isinstance(spec, Constant):
        return np.full(size, float(spec.sigma2))
    if isinstance(spec, Uniform):
        a, b = spec.bounds
        return a + (b - a) * rng.random(size)
    if isinstance(spec, BinaryUniform):
        low = rng.random(size) < spec.p
        a, b = spec.high_bounds
        u = rng.random(size)
        return np.where(low, 2.0 * spec.mu_l * u, a + (b - a) * u)
    if isinstance(spec, Gamma):
        return standard_gamma_array(spec.alpha, size, rng) / spec.rate
    raise TypeError(f"unknown noise spec {spec!r}")


def corrupt_label(y: float, sigma2: float, rng: np.random.Generator) -> float:
    if sigma2 < 0:
        raise ValueError("sigma2 must be nonnegative")
    return y + math.sqrt(sigma2) * rng.standard_normal()


@dataclass(frozen=True)
class VarianceDisturbance:
    """Noise on the reported variance: ``|sigma2 + delta|`` with ``std(delta) = D_v * sigma2 / 3``.

    With ``D_v = 1`` a sign flip (``delta < -sigma2``) sits three standard
    deviations out, i.e. happens with probability ~0.135%.
    """

    D_v: float

    def __post_init__(self):
        if self.D_v < 0:
            raise ValueError("D_v must be nonnegative")


def disturb_variance(sigma2: float, d: VarianceDisturbance, rng: np.random.Generator) -> float:
    if d.D_v == 0.0:
        return sigma2
    return abs(sigma2 + d.D_v * sigma2 / 3.0 * rng.standard_normal())


# --- noisy datasets -------------------------------------------------------


@dataclass(frozen=True)
class NoisySample:
    features: np.ndarray
    sigma2: float
    noisy_label: float
    true_label: float


@dataclass
class NoisyDataset:
    """Column-oriented collection of :class:`NoisySample` triplets.

    ``sigma2`` holds the variance reported to the learner (disturbed when a
    :class:`VarianceDisturbance` was applied); ``true_labels`` is kept for
    evaluation only.
    """

    features: np.ndarray
    sigma2: np.ndarray
    noisy_labels: np.ndarray
    true_labels: np.ndarray

    def __len__(self) -> int:
        return len(self.sigma2)

    def __getitem__(self, i: int) -> NoisySample:
        return NoisySample(self.features[i], float(self.sigma2[i]),
                           float(self.noisy_labels[i]), float(self.true_labels[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def to_csv(self, path, extra_columns: dict | None = None) -> None:
        """Write ``feature_0..feature_{d-1},sigma2,noisy_label,true_label``.

        ``extra_columns`` maps column name to a constant value appended to
        every row (used for provenance tags).
        """
        extra = extra_columns or {}
        d = self.features.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"feature_{j}" for j in range(d)] + ["sigma2", "noisy_label", "true_label"] + list(extra))
            for i in range(len(self)):
                w.writerow([repr(float(v)) for v in self.features[i]]
                           + [repr(float(self.sigma2[i])), repr(float(self.noisy_labels[i])),
                              repr(float(self.true_labels[i]))]
                           + [str(v) for v in extra.values()])

    @classmethod
    def from_csv(cls, path) -> "NoisyDataset":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            feat = [j for j, h in enumerate(header) if h.startswith("feature_")]
            cols = {h: j for j, h in enumerate(header)}
            for name in ("sigma2", "noisy_label", "true_label"):
                if name not in cols:
                    raise ValueError(f"{path}: missing column {name!r}")
            rows = list(reader)
        data = np.array([[float(r[j]) for j in feat] for r in rows]).reshape(len(rows), len(feat))
        col = lambda n: np.array([float(r[cols[n]]) for r in rows])  # noqa: E731
        return cls(data, col("sigma2"), col("noisy_label"), col("true_label"))


def sample_stream(seed: int, index: int) -> np.random.Generator:
    """Independent generator for sample ``index`` of the build seeded by ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def build_noisy_dataset(features: np.ndarray, labels: np.ndarray, spec: NoiseSpec,
                        seed: int, disturbance: VarianceDisturbance | None = None) -> NoisyDataset:
    """Corrupt clean ``labels`` with per-sample heteroscedastic noise.

    Each sample draws from its own stream keyed by ``(seed, index)``, so the
    result does not depend on generation order. Corruption always uses the
    true variance; the stored variance is the disturbed one if requested.
    """
    labels = np.asarray(labels, dtype=float)
    if not np.all(np.isfinite(labels)):
        raise ValueError("clean labels must be finite")
    n = len(labels)
    sigma2 = np.empty(n)
    reported = np.empty(n)
    noisy = np.empty(n)
    for i in range(n):
        rng = sample_stream(seed, i)
        s2 = sample_variance(spec, rng)
        sigma2[i] = s2
        noisy[i] = corrupt_label(labels[i], s2, rng)
        reported[i] = disturb_variance(s2, disturbance, rng) if disturbance else s2
    return NoisyDataset(np.asarray(features, dtype=float), reported, noisy, labels.copy())


def spec_to_dict(spec: NoiseSpec) -> dict:
    if isinstance(spec, Constant):
        return {"kind": "constant", "sigma2": spec.sigma2}
    if isinstance(spec, Uniform):
        return {"kind": "uniform", "mu_P": spec.mu_P, "V": spec.V}
    if isinstance(spec, BinaryUniform):
        return {"kind": "binary_uniform", "mu_P": spec.mu_P, "p": spec.p, "V_h": spec.V_h, "mu_l": spec.mu_l}
    if isinstance(spec, Gamma):
        return {"kind": "gamma", "alpha": spec.alpha, "mu_P": spec.mu_P}
    raise TypeError(f"unknown noise spec {spec!r}")


_KINDS = {"constant": Constant, "uniform": Uniform, "binary_uniform": BinaryUniform, "gamma": Gamma}


def spec_from_dict(d: dict) -> NoiseSpec:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in _KINDS:
        raise NoiseSpecError(f"unknown noise kind {kind!r}; expected one of {sorted(_KINDS)}")
    try:
        return _KINDS[kind](**d)
    except TypeError as e:
        raise NoiseSpecError(f"bad parameters for {kind}: {e}") from None
