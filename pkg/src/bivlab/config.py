"""Run-configuration files.

A run config is a JSON object with these sections (unknown keys are
rejected)::

    {
      "dataset":  {"source": "bike", "path": "data/hour.csv", "n_train": 7000,
                   "n_test": 3379, "seed": 0},
      "noise":    {"kind": "gamma", "alpha": 1.0, "mu_P": 20000.0, "D_v": 0.0},
      "training": {"scheme": "biv", "epsilon": 0.05, "epochs": 100, "batch_size": 256,
                   "optimizer": "adam", "learning_rate": 0.001, "seeds": [0, 1, 2, 3, 4]},
      "sweep":    {"epsilon": [0.01, 0.05, 0.1]},
      "output":   "runs/example"
    }

Noise variances, ``mu_P``, ``V``/``V_h`` and the Cutoff ``C`` are in raw
label units; ``epsilon`` is in normalized-label units. See the README for
every key.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .harness import SWEEP_KEYS, DataSource, GroundTruth, TrainConfig
from .losses import scheme_from_dict, scheme_to_dict
from .noise_model import NoiseSpecError, spec_from_dict, spec_to_dict
from .nn import INIT_SCHEMES


class ConfigError(ValueError):
    pass


DATASET_KEYS = {"source", "path", "n_train", "n_test", "seed", "n", "d"}
NOISE_KEYS = {"kind", "sigma2", "mu_P", "V", "p", "V_h", "mu_l", "alpha", "D_v"}
TRAINING_KEYS = {"scheme", "epsilon", "C", "epochs", "batch_size", "optimizer", "learning_rate",
                 "beta1", "beta2", "eps_hat", "hidden", "init", "eval_every", "smoothing_window", "seeds"}
TOP_KEYS = {"dataset", "noise", "training", "sweep", "output"}

DEFAULT_SEEDS = (0, 1, 2, 3, 4)


def _check_keys(section: str, d, allowed) -> dict:
    if not isinstance(d, dict):
        raise ConfigError(f"section {section!r} must be an object")
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {section!r}: {unknown}")
    return d


@dataclass
class RunConfigFile:
    base: TrainConfig
    seeds: list[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))
    sweep: dict[str, list] = field(default_factory=dict)
    output: str | None = None

    # -- parsing -------------------------------------------------------------

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfigFile":
        _check_keys("<top>", raw, TOP_KEYS)
        ds = _check_keys("dataset", raw.get("dataset", {}), DATASET_KEYS)
        noise = dict(_check_keys("noise", raw.get("noise", {"kind": "constant", "sigma2": 0.0}), NOISE_KEYS))
        tr = dict(_check_keys("training", raw.get("training", {}), TRAINING_KEYS))
        sweep = _check_keys("sweep", raw.get("sweep", {}) or {}, SWEEP_KEYS)
        for k, v in sweep.items():
            if not isinstance(v, list):
                raise ConfigError(f"sweep.{k} must be a list")

        try:
            source = DataSource(**ds)
            D_v = float(noise.pop("D_v", 0.0))
            if D_v < 0:
                raise ConfigError("noise.D_v must be >= 0")
            spec = spec_from_dict(noise)
        except (TypeError, NoiseSpecError) as e:
            raise ConfigError(str(e)) from None
        except ValueError as e:
            raise ConfigError(str(e)) from None

        name = str(tr.pop("scheme", "biv")).lower()
        scheme_args = {"scheme": name}
        for k in ("epsilon", "C"):
            if k in tr:
                v = tr.pop(k)
                if (name, k) in (("biv", "epsilon"), ("cutoff", "C")):
                    scheme_args[k] = v
                else:
                    raise ConfigError(f"training.{k} does not apply to scheme {name!r}")
        try:
            scheme = GroundTruth() if name == "gt" else scheme_from_dict(scheme_args)
        except ValueError as e:
            raise ConfigError(str(e)) from None

        seeds = tr.pop("seeds", list(DEFAULT_SEEDS))
        if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
            raise ConfigError("training.seeds must be a nonempty list of integers")
        if "init" in tr and tr["init"] not in INIT_SCHEMES:
            raise ConfigError(f"training.init must be one of {INIT_SCHEMES}")
        if "hidden" in tr:
            tr["hidden"] = tuple(tr["hidden"])
        try:
            base = TrainConfig(scheme=scheme, noise=spec, D_v=D_v, dataset=source, **tr)
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from None

        output = raw.get("output")
        if output is not None and not isinstance(output, str):
            raise ConfigError("output must be a string path")
        return cls(base, seeds, {k: list(v) for k, v in sweep.items()}, output)

    @classmethod
    def load(cls, path) -> "RunConfigFile":
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON: {e}") from None
        return cls.from_dict(raw)

    # -- serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        b = self.base
        ds = {"source": b.dataset.source, "path": b.dataset.path, "n_train": b.dataset.n_train,
              "n_test": b.dataset.n_test, "seed": b.dataset.seed, "n": b.dataset.n, "d": b.dataset.d}
        noise = {**spec_to_dict(b.noise), "D_v": b.D_v}
        scheme = {"scheme": "gt"} if isinstance(b.scheme, GroundTruth) else scheme_to_dict(b.scheme)
        training = {
            **scheme, "epochs": b.epochs, "batch_size": b.batch_size, "optimizer": b.optimizer,
            "learning_rate": b.learning_rate, "beta1": b.beta1, "beta2": b.beta2, "eps_hat": b.eps_hat,
            "hidden": list(b.hidden), "init": b.init, "eval_every": b.eval_every,
            "smoothing_window": b.smoothing_window, "seeds": list(self.seeds),
        }
        out = {"dataset": ds, "noise": noise, "training": training}
        if self.sweep:
            out["sweep"] = {k: list(v) for k, v in self.sweep.items()}
        if self.output is not None:
            out["output"] = self.output
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def hash(self) -> str:
        """Short digest of the canonical form (output location excluded); tags every output file."""
        d = self.to_dict()
        d.pop("output", None)
        canon = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:12]
