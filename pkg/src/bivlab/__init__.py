"""Batch inverse-variance (BIV) weighting for regression with heteroscedastic label noise."""
from .losses import BIV, IV, L2, Cutoff, batch_loss, biv_batch_loss, effective_batch_size
from .noise_model import BinaryUniform, Constant, Gamma, Uniform, build_noisy_dataset

__all__ = [
    "BIV", "IV", "L2", "Cutoff", "batch_loss", "biv_batch_loss", "effective_batch_size",
    "BinaryUniform", "Constant", "Gamma", "Uniform", "build_noisy_dataset",
]
__version__ = "0.1.0"
