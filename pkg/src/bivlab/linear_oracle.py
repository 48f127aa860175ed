"""Closed-form inverse-variance weighted least squares and a finite-difference gradient.

These are the reference answers the training stack is checked against: a
linear model trained on the IV loss should land on :func:`wls_closed_form`,
and :func:`finite_diff_gradient` checks the network's backpropagation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_FLOOR = 1e-12


class RankDeficientError(np.linalg.LinAlgError):
    pass


@dataclass
class LinearSystem:
    X: np.ndarray  # (n, d)
    y: np.ndarray  # (n,)
    w: np.ndarray  # (n,), 1 / sigma2

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        self.w = np.asarray(self.w, dtype=float).reshape(-1)
        n, d = self.X.shape
        if self.y.size != n or self.w.size != n:
            raise ValueError(f"X has {n} rows, y has {self.y.size}, w has {self.w.size}")
        if n < d:
            raise ValueError(f"need n >= d, got n={n}, d={d}")
        if not np.all(np.isfinite(self.w)) or np.any(self.w <= 0):
            raise ValueError("weights must be finite and positive (sigma2 > 0)")

    @classmethod
    def from_variances(cls, X, y, sigma2) -> "LinearSystem":
        with np.errstate(divide="ignore"):
            w = 1.0 / np.asarray(sigma2, dtype=float)
        return cls(X, y, w)  # zero variances are rejected by validation


def solve_gaussian(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``A x = b`` by Gaussian elimination with partial pivoting.

    Raises :class:`RankDeficientError` when a pivot falls below
    ``PIVOT_FLOOR`` relative to the largest entry of ``A``.
    """
    M = np.array(A, dtype=float)
    x = np.array(b, dtype=float).reshape(-1)
    n = M.shape[0]
    if M.shape != (n, n) or x.size != n:
        raise ValueError("A must be square and match b")
    scale = np.abs(M).max(initial=0.0)
    if scale == 0.0:
        raise RankDeficientError("zero matrix")
    for k in range(n):
        piv = k + int(np.argmax(np.abs(M[k:, k])))
        if abs(M[piv, k]) < PIVOT_FLOOR * scale:
            raise RankDeficientError(f"normal matrix is rank deficient (column {k})")
        if piv != k:
            M[[k, piv]] = M[[piv, k]]
            x[[k, piv]] = x[[piv, k]]
        f = M[k + 1:, k] / M[k, k]
        M[k + 1:, k:] -= np.outer(f, M[k, k:])
        x[k + 1:] -= f * x[k]
    out = np.empty(n)
    for k in range(n - 1, -1, -1):
        out[k] = (x[k] - M[k, k + 1:] @ out[k + 1:]) / M[k, k]
    return out


def wls_closed_form(system: LinearSystem) -> np.ndarray:
    """``beta* = (X^T W X)^-1 X^T W y`` via the d x d normal equations."""
    Xw = system.X * system.w[:, None]
    return solve_gaussian(Xw.T @ system.X, Xw.T @ system.y)


def wmse(system: LinearSystem, beta) -> float:
    """Weighted sum of squares ``sum_k w_k (y_k - x_k . beta)**2``."""
    r = system.y - system.X @ np.asarray(beta, dtype=float)
    return float(np.dot(system.w, r * r))


def finite_diff_gradient(f, theta, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``theta``."""
    theta = np.asarray(theta, dtype=float)
    grad = np.empty(theta.size)
    flat = theta.reshape(-1)
    for i in range(flat.size):
        e = np.zeros_like(flat)
        e[i] = h
        grad[i] = (f((flat + e).reshape(theta.shape)) - f((flat - e).reshape(theta.shape))) / (2.0 * h)
    return grad.reshape(theta.shape)
