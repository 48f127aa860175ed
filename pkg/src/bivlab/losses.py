"""Per-batch loss weighting schemes: L2, IV, BIV and Cutoff.

All schemes use the squared error ``(pred - y)**2`` as per-sample loss and
return the gradient of the batch loss with respect to the predictions, which
the network then back-propagates.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

DEFAULT_EPSILON = 0.05
RECOMMENDED_EPSILON = (0.01, 0.1)


@dataclass(frozen=True)
class L2:
    name = "l2"


@dataclass(frozen=True)
class IV:
    name = "iv"


@dataclass(frozen=True)
class BIV:
    epsilon: float = DEFAULT_EPSILON
    name = "biv"

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError(f"BIV epsilon must be >= 0, got {self.epsilon}")


@dataclass(frozen=True)
class Cutoff:
    C: float
    name = "cutoff"

    def __post_init__(self):
        if self.C <= 0:
            raise ValueError(f"Cutoff threshold must be > 0, got {self.C}")


WeightingScheme = Union[L2, IV, BIV, Cutoff]


@dataclass
class BatchLossResult:
    loss: float
    per_sample_weights: np.ndarray
    effective_batch_size: float
    grad_wrt_predictions: np.ndarray

    @property
    def empty(self) -> bool:
        """True for a Cutoff batch where every sample was filtered out."""
        return self.effective_batch_size == 0


def _prepare(predictions, noisy_labels, sigma2s=None):
    pred = np.asarray(predictions, dtype=float).reshape(-1)
    y = np.asarray(noisy_labels, dtype=float).reshape(-1)
    if pred.shape != y.shape or pred.size == 0:
        raise ValueError(f"need equal, nonzero lengths; got {pred.size} and {y.size}")
    if sigma2s is None:
        return pred, y, None
    s2 = np.asarray(sigma2s, dtype=float).reshape(-1)
    if s2.shape != pred.shape:
        raise ValueError(f"sigma2s has length {s2.size}, expected {pred.size}")
    if np.any(s2 < 0):
        raise ValueError("noise variances must be nonnegative")
    return pred, y, s2


def effective_batch_size(weights) -> float:
    """Kish effective sample size ``(sum w)**2 / sum w**2``."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    # Rescale first: raw IV weights can reach 1e17 and overflow when squared.
    top = w.max(initial=0.0)
    if top == 0:
        raise ValueError("effective batch size undefined for all-zero weights")
    w = w / top
    return float(w.sum() ** 2 / np.dot(w, w))


def _normalized(pred, y, w) -> BatchLossResult:
    # w already sums to one; overflow shows up as a non-finite loss the caller checks
    r = pred - y
    with np.errstate(over="ignore", invalid="ignore"):
        loss = float(np.dot(w, r * r))
    return BatchLossResult(
        loss=loss,
        per_sample_weights=w,
        effective_batch_size=effective_batch_size(w),
        grad_wrt_predictions=2.0 * w * r,
    )


def l2_batch_loss(predictions, noisy_labels) -> BatchLossResult:
    pred, y, _ = _prepare(predictions, noisy_labels)
    return _normalized(pred, y, np.full(pred.size, 1.0 / pred.size))


def biv_weights(sigma2s, epsilon: float) -> np.ndarray:
    """Normalized BIV weights ``(1/(s2+eps)) / sum_j 1/(s2_j+eps)``."""
    s2 = np.asarray(sigma2s, dtype=float)
    if epsilon == 0 and np.any(s2 == 0):
        raise ZeroDivisionError("BIV with epsilon=0 is undefined for zero-variance samples")
    # Shift by the smallest denominator so the largest raw weight is 1.
    denom = s2 + epsilon
    raw = denom.min() / denom
    return raw / raw.sum()


def biv_batch_loss(predictions, noisy_labels, sigma2s, epsilon: float = DEFAULT_EPSILON) -> BatchLossResult:
    """Batch inverse-variance loss.

    ``loss = [sum 1/(s2_k+eps)]^-1 * sum (pred_k - y_k)**2 / (s2_k+eps)``
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    pred, y, s2 = _prepare(predictions, noisy_labels, sigma2s)
    return _normalized(pred, y, biv_weights(s2, epsilon))


def iv_sample_loss(prediction: float, noisy_label: float, sigma2: float) -> float:
    if sigma2 < 0:
        raise ValueError("sigma2 must be nonnegative")
    if sigma2 == 0:
        raise ZeroDivisionError("IV loss is undefined for a zero-variance label")
    return (prediction - noisy_label) ** 2 / sigma2


def iv_batch_loss(predictions, noisy_labels, sigma2s) -> BatchLossResult:
    """Mean of per-sample IV losses; weights stay raw ``1/sigma2`` (no normalization)."""
    pred, y, s2 = _prepare(predictions, noisy_labels, sigma2s)
    if np.any(s2 == 0):
        raise ZeroDivisionError("IV loss is undefined for zero-variance labels")
    w = 1.0 / s2
    r = pred - y
    k = pred.size
    with np.errstate(over="ignore", invalid="ignore"):
        loss = float(np.dot(w, r * r) / k)
    return BatchLossResult(
        loss=loss,
        per_sample_weights=w,
        effective_batch_size=effective_batch_size(w),
        grad_wrt_predictions=2.0 * w * r / k,
    )


def cutoff_batch_loss(predictions, noisy_labels, sigma2s, C: float) -> BatchLossResult:
    """Mean squared error over samples with ``sigma2 < C``.

    A batch where nothing survives comes back with zero loss, zero gradient
    and ``effective_batch_size == 0``; callers should skip the update.
    """
    if C <= 0:
        raise ValueError("C must be positive")
    pred, y, s2 = _prepare(predictions, noisy_labels, sigma2s)
    keep = (s2 < C).astype(float)
    n_valid = keep.sum()
    if n_valid == 0:
        z = np.zeros_like(pred)
        return BatchLossResult(0.0, z, 0.0, z.copy())
    return _normalized(pred, y, keep / n_valid)


def batch_loss(scheme: WeightingScheme, predictions, noisy_labels, sigma2s) -> BatchLossResult:
    if isinstance(scheme, L2):
        return l2_batch_loss(predictions, noisy_labels)
    if isinstance(scheme, BIV):
        return biv_batch_loss(predictions, noisy_labels, sigma2s, scheme.epsilon)
    if isinstance(scheme, IV):
        return iv_batch_loss(predictions, noisy_labels, sigma2s)
    if isinstance(scheme, Cutoff):
        return cutoff_batch_loss(predictions, noisy_labels, sigma2s, scheme.C)
    raise TypeError(f"unknown weighting scheme {scheme!r}")


def scheme_to_dict(scheme: WeightingScheme) -> dict:
    if isinstance(scheme, BIV):
        return {"scheme": "biv", "epsilon": scheme.epsilon}
    if isinstance(scheme, Cutoff):
        return {"scheme": "cutoff", "C": scheme.C}
    return {"scheme": scheme.name}


def scheme_from_dict(d: dict) -> WeightingScheme:
    d = dict(d)
    name = str(d.pop("scheme", "")).lower()
    try:
        if name == "l2":
            return L2(**d)
        if name == "iv":
            return IV(**d)
        if name == "biv":
            return BIV(**d)
        if name == "cutoff":
            return Cutoff(**d)
    except TypeError as e:
        raise ValueError(f"bad parameters for scheme {name!r}: {e}") from None
    raise ValueError(f"unknown weighting scheme {name!r}; expected l2, iv, biv or cutoff")
