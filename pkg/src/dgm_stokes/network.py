"""Velocity and pressure MLPs, the ARCH-k family, and flat parameter storage."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError, NumericError

ACTIVATIONS = ("tanh", "sigmoid")
NETS = ("velocity", "pressure")


@dataclass(frozen=True)
class Architecture:
    hidden_layers: int = 1
    units_per_layer: int = 16
    activation: str = "tanh"
    input_dim: int = 2

    def __post_init__(self):
        if self.hidden_layers < 1:
            raise ConfigurationError(f"hidden_layers must be >= 1, got {self.hidden_layers}")
        if self.units_per_layer < 1:
            raise ConfigurationError(f"units_per_layer must be >= 1, got {self.units_per_layer}")
        if self.input_dim < 1:
            raise ConfigurationError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(
                f"unknown activation {self.activation!r}; expected one of {ACTIVATIONS}")

    @classmethod
    def arch(cls, k: int, dim: int = 2, units: int = 16, activation: str = "tanh") -> "Architecture":
        """ARCH-k: k hidden layers of ``units`` each."""
        return cls(hidden_layers=k, units_per_layer=units, activation=activation, input_dim=dim)

    @property
    def velocity_outputs(self) -> int:
        return self.input_dim

    @property
    def pressure_outputs(self) -> int:
        return 1

    def layer_sizes(self, net: str) -> list[int]:
        """Widths from input to output, e.g. [2, 16, 16, 2]."""
        if net == "velocity":
            out = self.velocity_outputs
        elif net == "pressure":
            out = self.pressure_outputs
        else:
            raise ConfigurationError(f"unknown net {net!r}; expected one of {NETS}")
        return [self.input_dim] + [self.units_per_layer] * self.hidden_layers + [out]

    def to_dict(self) -> dict:
        return {
            "hidden_layers": self.hidden_layers,
            "units_per_layer": self.units_per_layer,
            "activation": self.activation,
            "input_dim": self.input_dim,
        }


@dataclass(frozen=True)
class LayerSlot:
    """Where one affine stage lives inside a flat parameter vector."""

    n_out: int
    n_in: int
    w_start: int
    b_start: int

    @property
    def stop(self) -> int:
        return self.b_start + self.n_out

    def index(self, row: int, col: int | None = None) -> int:
        """Flat index of W[row, col], or of b[row] when ``col`` is None."""
        if col is None:
            return self.b_start + row
        return self.w_start + row * self.n_in + col


def make_layout(sizes: list[int]) -> list[LayerSlot]:
    return list(_layout(tuple(sizes)))


@lru_cache(maxsize=None)
def _layout(sizes: tuple[int, ...]) -> tuple[LayerSlot, ...]:
    slots = []
    offset = 0
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        slots.append(LayerSlot(n_out, n_in, offset, offset + n_out * n_in))
        offset += n_out * n_in + n_out
    return tuple(slots)


def layout_size(layout: list[LayerSlot]) -> int:
    return layout[-1].stop if layout else 0


def unflatten(theta: np.ndarray, layout: list[LayerSlot]) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views (W, b) per layer into ``theta``; no copies."""
    layers = []
    for s in layout:
        W = theta[s.w_start:s.b_start].reshape(s.n_out, s.n_in)
        b = theta[s.b_start:s.stop]
        layers.append((W, b))
    return layers


def flatten(layers: list[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    parts = []
    for W, b in layers:
        parts.append(np.asarray(W, dtype=np.float64).ravel())
        parts.append(np.asarray(b, dtype=np.float64).ravel())
    return np.concatenate(parts) if parts else np.zeros(0)


@dataclass
class NetworkParams:
    """theta1 (velocity net) and theta2 (pressure net) as flat float64 vectors."""

    arch: Architecture
    theta1: np.ndarray
    theta2: np.ndarray
    seed: int | None = None
    layout1: list[LayerSlot] = field(init=False, repr=False)
    layout2: list[LayerSlot] = field(init=False, repr=False)

    def __post_init__(self):
        self.theta1 = np.ascontiguousarray(self.theta1, dtype=np.float64)
        self.theta2 = np.ascontiguousarray(self.theta2, dtype=np.float64)
        self.layout1 = make_layout(self.arch.layer_sizes("velocity"))
        self.layout2 = make_layout(self.arch.layer_sizes("pressure"))
        if self.theta1.shape != (layout_size(self.layout1),):
            raise ValueError(
                f"theta1 has shape {self.theta1.shape}, layout needs ({layout_size(self.layout1)},)")
        if self.theta2.shape != (layout_size(self.layout2),):
            raise ValueError(
                f"theta2 has shape {self.theta2.shape}, layout needs ({layout_size(self.layout2)},)")

    @property
    def n1(self) -> int:
        return self.theta1.size

    @property
    def n2(self) -> int:
        return self.theta2.size

    @property
    def size(self) -> int:
        return self.n1 + self.n2

    def theta(self, net: str) -> np.ndarray:
        if net == "velocity":
            return self.theta1
        if net == "pressure":
            return self.theta2
        raise ConfigurationError(f"unknown net {net!r}; expected one of {NETS}")

    def layout(self, net: str) -> list[LayerSlot]:
        if net == "velocity":
            return self.layout1
        if net == "pressure":
            return self.layout2
        raise ConfigurationError(f"unknown net {net!r}; expected one of {NETS}")

    def layers(self, net: str) -> list[tuple[np.ndarray, np.ndarray]]:
        return unflatten(self.theta(net), self.layout(net))

    def flat(self) -> np.ndarray:
        """theta1 followed by theta2."""
        return np.concatenate([self.theta1, self.theta2])

    def with_flat(self, flat: np.ndarray) -> "NetworkParams":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.size,):
            raise ValueError(f"flat vector has shape {flat.shape}, expected ({self.size},)")
        return NetworkParams(self.arch, flat[:self.n1].copy(), flat[self.n1:].copy(), self.seed)

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.arch, self.theta1.copy(), self.theta2.copy(), self.seed)


def init_params(arch: Architecture, seed: int) -> NetworkParams:
    """Glorot-uniform weights, zero biases, reproducible from ``seed``."""
    rng = np.random.default_rng(seed)
    thetas = []
    for net in NETS:
        layers = []
        for s in make_layout(arch.layer_sizes(net)):
            limit = np.sqrt(6.0 / (s.n_in + s.n_out))
            layers.append((rng.uniform(-limit, limit, size=(s.n_out, s.n_in)), np.zeros(s.n_out)))
        thetas.append(flatten(layers))
    return NetworkParams(arch, thetas[0], thetas[1], seed)


def zero_params(arch: Architecture) -> NetworkParams:
    n1 = layout_size(make_layout(arch.layer_sizes("velocity")))
    n2 = layout_size(make_layout(arch.layer_sizes("pressure")))
    return NetworkParams(arch, np.zeros(n1), np.zeros(n2))


def activation(name: str):
    if name == "tanh":
        return np.tanh
    if name == "sigmoid":
        return _sigmoid
    raise ConfigurationError(f"unknown activation {name!r}; expected one of {ACTIVATIONS}")


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def forward(params: NetworkParams, net: str, x: np.ndarray) -> np.ndarray:
    """Plain forward pass; ``x`` is (d,) or (N, d)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = np.atleast_2d(x)
    if h.shape[1] != params.arch.input_dim:
        raise ValueError(f"point dimension {h.shape[1]} != network input_dim {params.arch.input_dim}")
    if not np.all(np.isfinite(h)):
        raise NumericError("non-finite input point")
    act = activation(params.arch.activation)
    layers = params.layers(net)
    for i, (W, b) in enumerate(layers):
        h = h @ W.T + b
        if i < len(layers) - 1:
            h = act(h)
    return h[0] if single else h


def predict(params: NetworkParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(U, P) at ``x``. For a single point P is a scalar, for a batch an (N,) array."""
    U = forward(params, "velocity", x)
    P = forward(params, "pressure", x)
    return U, P[..., 0]
