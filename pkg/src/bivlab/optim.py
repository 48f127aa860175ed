"""SGD and Adam update rules.

Parameters, gradients and moment buffers are lists of arrays with matching
shapes (see :meth:`bivlab.nn.MlpParams.tensors`). Updates are pure: new
arrays are returned, inputs are left untouched.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SGDConfig:
    learning_rate: float = 0.001

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.eps_hat <= 0:
            raise ValueError("eps_hat must be positive")


@dataclass
class OptimizerState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0


def adam_init(params) -> OptimizerState:
    return OptimizerState([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def _check(params, grads):
    if len(params) != len(grads):
        raise ValueError(f"{len(params)} parameter tensors but {len(grads)} gradients")
    for p, g in zip(params, grads):
        if np.shape(p) != np.shape(g):
            raise ValueError(f"shape mismatch {np.shape(p)} vs {np.shape(g)}")


def sgd_step(params, grads, lr: float) -> list[np.ndarray]:
    _check(params, grads)
    return [p - lr * g for p, g in zip(params, grads)]


def adam_step(state: OptimizerState, params, grads, config: AdamConfig = AdamConfig()):
    """One bias-corrected Adam update; returns ``(new_state, new_params)``."""
    _check(params, grads)
    t = state.step + 1
    b1, b2 = config.beta1, config.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    m_new, v_new, p_new = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        p_new.append(p - config.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + config.eps_hat))
        m_new.append(m)
        v_new.append(v)
    return OptimizerState(m_new, v_new, t), p_new
