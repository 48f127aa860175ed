"""Dense ReLU regression network with hand-written backpropagation.

Weights are stored ``(fan_out, fan_in)``; a batch of inputs is a ``(K, d)``
matrix. Everything runs in float64.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BIKE_LAYERS = (19, 100, 50, 20, 10, 1)


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple[int, ...]
    # The linear oracle tests need a bare affine map; regular models keep >= 1 hidden layer.
    allow_linear: bool = field(default=False, compare=False)

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if any(s <= 0 for s in sizes):
            raise ValueError(f"layer sizes must be positive: {sizes}")
        if sizes[-1] != 1:
            raise ValueError("output layer must have size 1 (scalar regression)")
        min_len = 2 if self.allow_linear else 3
        if len(sizes) < min_len:
            raise ValueError(f"need at least one hidden layer, got {sizes}")

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1


@dataclass
class MlpParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def tensors(self) -> list[np.ndarray]:
        """Flat ``[W0, b0, W1, b1, ...]`` view, the layout used by the optimizers."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @classmethod
    def from_tensors(cls, tensors) -> "MlpParams":
        tensors = list(tensors)
        return cls(tensors[0::2], tensors[1::2])

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def flatten(self) -> np.ndarray:
        return np.concatenate([t.ravel() for t in self.tensors()])

    def unflatten(self, theta: np.ndarray) -> "MlpParams":
        """Parameters with this layout and values taken from the vector ``theta``."""
        out, i = [], 0
        for t in self.tensors():
            out.append(np.asarray(theta[i:i + t.size], dtype=float).reshape(t.shape))
            i += t.size
        return MlpParams.from_tensors(out)

    def save(self, path) -> None:
        """Write an ``.npz`` checkpoint with arrays tagged ``W0, b0, W1, ...``."""
        arrays = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            arrays[f"W{i}"] = w
            arrays[f"b{i}"] = b
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path) -> "MlpParams":
        with np.load(path) as z:
            n = len(z.files) // 2
            return cls([z[f"W{i}"] for i in range(n)], [z[f"b{i}"] for i in range(n)])


INIT_SCHEMES = ("he", "fan_in_uniform")


def init_params(spec: MlpSpec, seed, scheme: str = "he") -> MlpParams:
    """Random parameters, deterministic per ``seed``.

    ``"he"``: ``W ~ N(0, 2/fan_in)``, zero biases.
    ``"fan_in_uniform"``: weights and biases ``~ U(-1/sqrt(fan_in), 1/sqrt(fan_in))``,
    the default of common deep-learning frameworks for dense layers.
    """
    rng = np.random.default_rng(seed)
    sizes = spec.layer_sizes
    pairs = list(zip(sizes[:-1], sizes[1:]))
    if scheme == "he":
        weights = [rng.normal(0.0, np.sqrt(2.0 / fi), size=(fo, fi)) for fi, fo in pairs]
        biases = [np.zeros(fo) for _, fo in pairs]
    elif scheme == "fan_in_uniform":
        weights, biases = [], []
        for fi, fo in pairs:
            bound = 1.0 / np.sqrt(fi)
            weights.append(rng.uniform(-bound, bound, size=(fo, fi)))
            biases.append(rng.uniform(-bound, bound, size=fo))
    else:
        raise ValueError(f"unknown init scheme {scheme!r}; expected one of {INIT_SCHEMES}")
    return MlpParams(weights, biases)


@dataclass
class ForwardCache:
    inputs: np.ndarray  # (K, d)
    pre_activations: list[np.ndarray]  # z_l, each (K, n_l)
    activations: list[np.ndarray]  # a_l = relu(z_l) for hidden layers


def forward(params: MlpParams, features):
    """Predictions and the cache needed by :func:`backward`.

    ``features`` may be a single vector (returns a float) or a ``(K, d)``
    batch (returns a length-``K`` array).
    """
    x = np.asarray(features, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    d_in = params.weights[0].shape[1]
    if x.shape[1] != d_in:
        raise ValueError(f"expected {d_in} features, got {x.shape[1]}")

    a = x
    zs, acts = [], []
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w.T + b
        zs.append(z)
        if i < last:
            a = np.maximum(z, 0.0)
            acts.append(a)
    pred = zs[-1][:, 0]
    cache = ForwardCache(x, zs, acts)
    return (float(pred[0]) if single else pred), cache


def predict(params: MlpParams, features) -> np.ndarray:
    return forward(params, features)[0]


def backward_from_output(params: MlpParams, cache: ForwardCache, dpred) -> MlpParams:
    """Gradient of a batch loss given ``dL/dprediction`` for each sample."""
    delta = np.asarray(dpred, dtype=float).reshape(-1, 1)
    n = len(params.weights)
    gw: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    for i in range(n - 1, -1, -1):
        a_prev = cache.inputs if i == 0 else cache.activations[i - 1]
        gw[i] = delta.T @ a_prev
        gb[i] = delta.sum(axis=0)
        if i > 0:
            # relu'(0) := 0
            delta = (delta @ params.weights[i]) * (cache.pre_activations[i - 1] > 0.0)
    return MlpParams(gw, gb)


def backward(params: MlpParams, cache: ForwardCache, residual_weights, residuals) -> MlpParams:
    """Exact gradient of ``sum_k w_k * residual_k**2`` with respect to the parameters.

    ``residuals`` are ``prediction - noisy_label``; the weights are used as given.
    """
    w = np.asarray(residual_weights, dtype=float)
    r = np.asarray(residuals, dtype=float)
    return backward_from_output(params, cache, 2.0 * w * r)
