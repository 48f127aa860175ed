"""Named experiment configurations for the Bike Sharing study.

Noise and cutoff values are in raw label units (bike counts squared).
"""
from __future__ import annotations

from pathlib import Path

from .harness import DataSource, GroundTruth, TrainConfig
from .losses import BIV, IV, L2, Cutoff
from .noise_model import BinaryUniform, Gamma, Uniform

MU_P_BIKE = 20000.0
DEFAULT_BIKE_CSV = Path(__file__).resolve().parents[2] / "data" / "hour.csv"
SEEDS = (0, 1, 2, 3, 4)

# Reference lowest smoothed test loss on Bike, mean over 5 runs (normalized units).
REFERENCE_BIKE = {
    1.0: {"C=mu/20": 0.327, "C=mu/4": 0.135, "C=mu": 0.111, "C=5mu": 0.120,
          "l2": 0.122, "biv": 0.096, "iv": 0.120, "gt": 0.066},
    0.5: {"C=mu/20": 0.125, "C=mu/4": 0.097, "C=mu": 0.097, "C=5mu": 0.111,
          "l2": 0.116, "biv": 0.088, "iv": 0.554, "gt": 0.066},
    0.25: {"C=mu/20": 0.092, "C=mu/4": 0.085, "C=mu": 0.088, "C=5mu": 0.107,
           "l2": 0.119, "biv": 0.079, "iv": None, "gt": 0.066},
}


def bike_source(path=None) -> DataSource:
    return DataSource(source="bike", path=str(path or DEFAULT_BIKE_CSV))


def bike_base(alpha: float = 1.0, path=None, **kw) -> TrainConfig:
    """Bike MLP (19-100-50-20-10-1), Adam lr 1e-3, batch 256, 100 epochs, Gamma noise."""
    return TrainConfig(scheme=BIV(0.05), noise=Gamma(alpha, MU_P_BIKE), dataset=bike_source(path), **kw)


def cutoffs(mu_P: float = MU_P_BIKE) -> dict[str, Cutoff]:
    return {"C=mu/20": Cutoff(mu_P / 20), "C=mu/4": Cutoff(mu_P / 4),
            "C=mu": Cutoff(mu_P), "C=5mu": Cutoff(5 * mu_P)}


def all_schemes(mu_P: float = MU_P_BIKE) -> dict:
    return {**cutoffs(mu_P), "l2": L2(), "biv": BIV(0.05), "iv": IV(), "gt": GroundTruth()}


def equal_mean_noise(mu_P: float = MU_P_BIKE) -> dict:
    """Three variance distributions sharing the mean ``mu_P``."""
    return {
        "uniform_vmax": Uniform(mu_P, mu_P**2 / 3),
        "binary_p0.5": BinaryUniform(mu_P, 0.5, 0.0),
        "gamma_a1": Gamma(1.0, mu_P),
    }


EPSILON_GRID = (0.005, 0.01, 0.05, 0.1, 0.5, 1.0)
DV_GRID = (0.0, 1.0, 2.0)
BATCH_GRID = (16, 64, 256)


def synthetic_base(**kw) -> TrainConfig:
    """Friedman-style synthetic task; mu_P set to ~0.6 label variances like the Bike setup."""
    src = DataSource(source="synthetic", n=4000, d=10, n_train=2000, n_test=None, seed=0)
    return TrainConfig(scheme=BIV(0.05), noise=Gamma(1.0, 15.0), dataset=src, **kw)
