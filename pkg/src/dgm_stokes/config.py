"""Experiment configuration and checkpoint persistence (both plain JSON)."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .network import Architecture, NetworkParams
from .problem import PROBLEM_NAMES, make_problem
from .sampler import sample_dataset
from .trainer import TrainConfig

CHECKPOINT_VERSION = 1

_TOP_KEYS = {"problem", "alpha", "nu", "arch", "dataset", "train", "out", "deterministic"}
_ARCH_KEYS = {"hidden_layers", "units_per_layer", "activation"}
_DATASET_KEYS = {"total", "boundary_fraction", "seed"}


@dataclass
class DatasetSpec:
    total: int = 2000
    boundary_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.total < 2:
            raise ConfigurationError(f"dataset.total must be >= 2, got {self.total}")
        if not 0 < self.boundary_fraction < 1:
            raise ConfigurationError(
                f"dataset.boundary_fraction must be in (0, 1), got {self.boundary_fraction}")


@dataclass
class ExperimentConfig:
    problem: str = "stokes2d"
    alpha: float | None = None
    nu: float | None = None
    hidden_layers: int = 2
    units_per_layer: int = 16
    activation: str = "tanh"
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    out: str = "runs/default"
    deterministic: bool = False

    def __post_init__(self):
        if self.problem not in PROBLEM_NAMES:
            raise ConfigurationError(
                f"unknown problem {self.problem!r}; expected one of {PROBLEM_NAMES}")
        self.train.deterministic = self.deterministic or self.train.deterministic
        self.deterministic = self.train.deterministic
        self.architecture()

    @property
    def dim(self) -> int:
        return 3 if self.problem.endswith("3d") else 2

    def architecture(self) -> Architecture:
        return Architecture(self.hidden_layers, self.units_per_layer, self.activation, self.dim)

    def make_problem(self):
        return make_problem(self.problem, self.alpha, self.nu)

    def make_dataset(self):
        d = self.dataset
        return sample_dataset(self.dim, d.total, d.boundary_fraction, d.seed)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigurationError("config must be a JSON object")
        unknown = set(raw) - _TOP_KEYS
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        arch = raw.get("arch", {})
        bad = set(arch) - _ARCH_KEYS
        if bad:
            raise ConfigurationError(f"unknown arch keys: {sorted(bad)}")
        ds = raw.get("dataset", {})
        bad = set(ds) - _DATASET_KEYS
        if bad:
            raise ConfigurationError(f"unknown dataset keys: {sorted(bad)}")
        try:
            return cls(
                problem=raw.get("problem", "stokes2d"),
                alpha=raw.get("alpha"),
                nu=raw.get("nu"),
                dataset=DatasetSpec(**ds),
                train=TrainConfig.from_dict(raw.get("train", {})),
                out=raw.get("out", "runs/default"),
                deterministic=bool(raw.get("deterministic", False)),
                **arch,
            )
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from None

    def to_dict(self) -> dict:
        train = self.train.to_dict()
        return {
            "problem": self.problem,
            "alpha": self.alpha,
            "nu": self.nu,
            "arch": {"hidden_layers": self.hidden_layers, "units_per_layer": self.units_per_layer,
                     "activation": self.activation},
            "dataset": {"total": self.dataset.total,
                        "boundary_fraction": self.dataset.boundary_fraction,
                        "seed": self.dataset.seed},
            "train": train,
            "out": self.out,
            "deterministic": self.deterministic,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
    return ExperimentConfig.from_dict(raw)


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")


# -- checkpoints -------------------------------------------------------------

class CheckpointVersionError(ConfigurationError):
    pass


def save_checkpoint(path, params: NetworkParams, iteration: int = 0, rng_state=None,
                    config_hash: str = "") -> None:
    doc = {
        "version": CHECKPOINT_VERSION,
        "arch": params.arch.to_dict(),
        "theta1": params.theta1.tolist(),
        "theta2": params.theta2.tolist(),
        "seed": params.seed,
        "iteration": int(iteration),
        "rng_state": rng_state,
        "config_hash": config_hash,
    }
    Path(path).write_text(json.dumps(doc, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def load_checkpoint(path) -> tuple[NetworkParams, dict]:
    """Parameters plus the remaining checkpoint fields."""
    doc = json.loads(Path(path).read_text())
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"{path}: checkpoint version {doc.get('version')!r}, expected {CHECKPOINT_VERSION}")
    arch = Architecture(**doc["arch"])
    params = NetworkParams(arch, np.array(doc["theta1"], dtype=np.float64),
                           np.array(doc["theta2"], dtype=np.float64), doc.get("seed"))
    meta = {k: doc.get(k) for k in ("iteration", "rng_state", "config_hash")}
    return params, meta
