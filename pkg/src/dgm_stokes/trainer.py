"""Stochastic-gradient training loop with history capture."""

from __future__ import annotations

import logging
import math
import time
from collections import deque
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import ConfigurationError
from .metrics import velocity_errors
from .network import Architecture, NetworkParams, init_params
from .objective import LossBreakdown, batch_objective, loss_and_gradient
from .problem import StokesProblem
from .sampler import BatchStream, Dataset, FreshStream

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("iter", "J", "residual", "divergence", "boundary", "errL1", "errL2", "lr",
                   "wall_ms")


@dataclass
class TrainConfig:
    max_iterations: int = 20000
    optimizer: str = "adam"
    lr0: float = 1e-3
    lr_decay: float = 0.0
    interior_batch: int | None = 128
    boundary_batch: int | None = 32
    grad_norm_tolerance: float = 1e-8
    grad_window: int = 100
    eval_every: int = 1000
    eval_resolution: int = 101
    seed: int = 0
    sampling: str = "fixed"
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    deterministic: bool = False

    def __post_init__(self):
        if self.max_iterations < 0:
            raise ConfigurationError(f"max_iterations must be >= 0, got {self.max_iterations}")
        if not 0 < self.lr0 < 1:
            raise ConfigurationError(f"lr0 must lie in (0, 1), got {self.lr0}")
        if self.lr_decay < 0:
            raise ConfigurationError(f"lr_decay must be >= 0, got {self.lr_decay}")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigurationError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if self.sampling not in ("fixed", "fresh"):
            raise ConfigurationError(f"sampling must be 'fixed' or 'fresh', got {self.sampling!r}")
        if self.eval_every < 1:
            raise ConfigurationError(f"eval_every must be >= 1, got {self.eval_every}")
        if self.grad_window < 1:
            raise ConfigurationError(f"grad_window must be >= 1, got {self.grad_window}")
        self.weights = tuple(float(w) for w in self.weights)
        if len(self.weights) != 3:
            raise ConfigurationError("weights needs exactly three entries")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown training keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["weights"] = list(self.weights)
        return out


def lr_schedule(config: TrainConfig, n: int) -> float:
    """alpha_n = alpha_0 / (1 + kappa n)."""
    if n < 0:
        raise ValueError(f"iteration must be >= 0, got {n}")
    return config.lr0 / (1.0 + config.lr_decay * n)


class SGD:
    def __init__(self, size: int):
        self.size = size

    def step(self, theta, grad, lr):
        return theta - lr * grad


class Adam:
    def __init__(self, size: int, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def step(self, theta, grad, lr):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return theta - lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(config: TrainConfig, size: int):
    if config.optimizer == "sgd":
        return SGD(size)
    return Adam(size, config.beta1, config.beta2, config.eps)


@dataclass
class TrainHistory:
    records: list[dict] = field(default_factory=list)
    params: NetworkParams | None = None
    reason: str = ""
    iterations: int = 0
    rng_state: dict | None = None

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.records], dtype=float)

    @property
    def final(self) -> dict:
        return self.records[-1]

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(",".join(HISTORY_COLUMNS) + "\n")
            for r in self.records:
                fh.write(",".join(_fmt(r[c]) for c in HISTORY_COLUMNS) + "\n")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def _record(it, params, problem, dataset, config, lr, wall_ms) -> dict:
    loss = batch_objective(params, problem, dataset.interior, dataset.boundary, config.weights)
    row = {"iter": it, **loss.as_row(), "errL1": math.nan, "errL2": math.nan, "lr": lr,
           "wall_ms": wall_ms}
    if problem.exact is not None:
        row["errL1"], row["errL2"] = velocity_errors(params, problem, config.eval_resolution)
    return row


def train(problem: StokesProblem, dataset: Dataset, arch: Architecture, config: TrainConfig,
          params: NetworkParams | None = None, callback=None) -> TrainHistory:
    """Run the optimisation loop.

    Stops after ``max_iterations`` steps, when the mean gradient norm over the
    last ``grad_window`` steps drops to ``grad_norm_tolerance``, or when the
    loss turns non-finite (``reason == "diverged"``; the returned params are the
    last finite ones). ``callback(iteration, params, row)`` is called at every
    checkpoint and may return True to stop (``reason == "user"``).
    """
    if arch.input_dim != problem.dim or dataset.dim != problem.dim:
        raise ConfigurationError(
            f"dimension mismatch: problem {problem.dim}, arch {arch.input_dim}, "
            f"dataset {dataset.dim}")
    if params is None:
        params = init_params(arch, config.seed)
    if config.sampling == "fixed":
        stream = BatchStream(dataset, config.interior_batch, config.boundary_batch,
                             seed=config.seed + 1)
    else:
        stream = FreshStream(problem.dim, config.interior_batch or 128,
                             config.boundary_batch or 32, seed=config.seed + 1)
    if config.sampling == "fixed":
        forcing = problem.forcing(dataset.interior)
        targets = problem.boundary(dataset.boundary)

        def next_batch():
            ii, ib = stream.next_indices()
            return dataset.interior[ii], dataset.boundary[ib], (forcing[ii], targets[ib])
    else:
        def next_batch():
            return (*stream.next(), None)
    opt = make_optimizer(config, params.size)
    theta = params.flat()
    norms = deque(maxlen=config.grad_window)
    history = TrainHistory()
    t0 = time.perf_counter()

    def wall():
        return 0.0 if config.deterministic else (time.perf_counter() - t0) * 1e3

    history.records.append(_record(0, params, problem, dataset, config, lr_schedule(config, 0),
                                   wall()))
    reason = "max_iters"
    it = 0
    while it < config.max_iterations:
        interior, boundary, data = next_batch()
        lr = lr_schedule(config, it)
        loss, grad = loss_and_gradient(params, problem, interior, boundary, config.weights, data)
        if not (math.isfinite(loss.total) and np.all(np.isfinite(grad))):
            reason = "diverged"
            log.warning("non-finite loss at iteration %d; keeping last finite parameters", it)
            break
        new_theta = opt.step(theta, grad, lr)
        if not np.all(np.isfinite(new_theta)):
            reason = "diverged"
            break
        prev = params
        theta = new_theta
        params = params.with_flat(theta)
        it += 1
        norms.append(float(np.linalg.norm(grad)))
        stop = sum(norms) / len(norms) <= config.grad_norm_tolerance
        if it % config.eval_every == 0 or stop or it == config.max_iterations:
            row = _record(it, params, problem, dataset, config, lr, wall())
            if not math.isfinite(row["J"]):
                reason = "diverged"
                params = prev
                break
            history.records.append(row)
            log.info("iter %d J=%.3e errL2=%.3e", it, row["J"], row["errL2"])
            if callback is not None and callback(it, params, row):
                reason = "user"
                break
        if stop:
            reason = "grad_norm"
            break
    history.params = params
    history.reason = reason
    history.iterations = it
    history.rng_state = stream.state()
    return history


def final_loss(history: TrainHistory) -> LossBreakdown:
    r = history.final
    return LossBreakdown(r["residual"], r["divergence"], r["boundary"])
