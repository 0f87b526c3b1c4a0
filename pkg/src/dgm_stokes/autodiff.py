"""Extended forward propagation of (value, input-Jacobian, pure second input
derivatives) through an MLP, with a reverse sweep for parameter gradients.

A block is stored packed as an array of shape ``(C, B, n)``: channel 0 holds
the values, channels ``1..d`` the derivatives d/dx_j and channels ``d+1..2d``
the pure second derivatives d^2/dx_j^2. Value-only blocks have ``C == 1`` and
first-order blocks ``C == 1 + d``.
Keeping the channels in one array lets each affine stage be a single matmul, and
putting the channel axis first keeps each channel contiguous for the elementwise
activation rules.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericError
from .network import NetworkParams, layout_size


def activation_derivatives(name: str, z: np.ndarray, upto: int = 3):
    """sigma(z) and its first three derivatives; those above ``upto`` are None."""
    if name == "tanh":
        t = np.tanh(z)
        s1 = 1.0 - t * t
        s2 = -2.0 * t * s1 if upto >= 2 else None
        s3 = (6.0 * t * t - 2.0) * s1 if upto >= 3 else None
        return t, s1, s2, s3
    if name == "sigmoid":
        s = 0.5 * (1.0 + np.tanh(0.5 * z))
        s1 = s * (1.0 - s)
        s2 = s1 * (1.0 - 2.0 * s) if upto >= 2 else None
        s3 = s2 * (1.0 - 2.0 * s) - 2.0 * s1 * s1 if upto >= 3 else None
        return s, s1, s2, s3
    raise ConfigurationError(f"unknown activation {name!r}; supported: tanh, sigmoid")


@dataclass
class ExtendedBlock:
    data: np.ndarray  # (C, B, n)
    dim: int

    @classmethod
    def seed(cls, x: np.ndarray, order: int = 2) -> "ExtendedBlock":
        """Block for the identity map at points ``x`` of shape (B, d)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        B, d = x.shape
        if order == 0:
            return cls(x[None].copy(), d)
        data = np.zeros((1 + order * d, B, d))
        data[0] = x
        data[1:1 + d] = np.eye(d)[:, None, :]
        return cls(data, d)

    @classmethod
    def from_parts(cls, value, jac=None, d2=None) -> "ExtendedBlock":
        """Build from value (B, n), jac (B, n, d), d2 (B, n, d)."""
        value = np.atleast_2d(np.asarray(value, dtype=np.float64))
        if jac is None:
            return cls(value[None].copy(), 0)
        jac = np.asarray(jac, dtype=np.float64).reshape(value.shape[0], value.shape[1], -1)
        d = jac.shape[2]
        d2 = np.zeros_like(jac) if d2 is None else \
            np.asarray(d2, dtype=np.float64).reshape(jac.shape)
        data = np.concatenate(
            [value[None], jac.transpose(2, 0, 1), d2.transpose(2, 0, 1)], axis=0)
        return cls(data, d)

    @property
    def order(self) -> int:
        return (self.data.shape[0] - 1) // max(self.dim, 1)

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def value(self) -> np.ndarray:
        return self.data[0]

    @property
    def jac(self) -> np.ndarray | None:
        if self.order == 0:
            return None
        return self.data[1:1 + self.dim].transpose(1, 2, 0)

    @property
    def d2(self) -> np.ndarray | None:
        if self.order < 2:
            return None
        return self.data[1 + self.dim:].transpose(1, 2, 0)


class _AffineNode:
    __slots__ = ("layer", "W", "b", "x")

    def __init__(self, layer, W, b, x):
        self.layer, self.W, self.b, self.x = layer, W, b, x

    def forward(self, data):
        # one 2-D GEMM over all (point, channel) rows; a stacked matmul is much slower
        C, B, n_in = data.shape
        out = (data.reshape(C * B, n_in) @ self.W.T).reshape(C, B, -1)
        out[0] += self.b
        return out


class _ActivationNode:
    __slots__ = ("name", "dim", "z", "derivs")

    def __init__(self, name, dim, z, derivs):
        self.name, self.dim, self.z, self.derivs = name, dim, z, derivs

    def forward(self, data):
        return _activation_forward(self.name, data, self.dim)[0]


class Tape:
    """Ordered record of the stages applied to a block.

    Each node keeps the input it saw, so the reverse sweep needs no recomputation
    and ``replay`` can re-run the recorded program from the original input.
    """

    def __init__(self):
        self.nodes: list = []
        self.input: np.ndarray | None = None

    def __len__(self):
        return len(self.nodes)

    def replay(self) -> np.ndarray:
        data = self.input
        for node in self.nodes:
            data = node.forward(data)
        return data

    def backward(self, g_out: np.ndarray, layout, n_params: int) -> np.ndarray:
        grad = np.zeros(n_params)
        g = g_out
        for node in reversed(self.nodes):
            if isinstance(node, _AffineNode):
                slot = layout[node.layer]
                n_out, n_in = node.W.shape
                gW = g.reshape(-1, n_out).T @ node.x.reshape(-1, n_in)
                grad[slot.w_start:slot.b_start] += gW.ravel()
                grad[slot.b_start:slot.stop] += g[0].sum(axis=0)
                if node is self.nodes[0]:
                    break
                C, B, _ = g.shape
                g = (g.reshape(C * B, n_out) @ node.W).reshape(C, B, n_in)
            else:
                g = _activation_backward(node, g)
        return grad


def _check_shapes(block: ExtendedBlock, W: np.ndarray, b: np.ndarray):
    if W.ndim != 2 or W.shape[1] != block.width:
        raise ValueError(
            f"affine shape mismatch: input block width {block.width}, W shape {W.shape}")
    if b.shape != (W.shape[0],):
        raise ValueError(f"affine shape mismatch: W shape {W.shape}, b shape {b.shape}")


def extend_affine(block: ExtendedBlock, W: np.ndarray, b: np.ndarray,
                  tape: Tape | None = None, layer: int = 0) -> ExtendedBlock:
    """value' = W value + b; jac' = W jac; d2' = W d2."""
    W = np.asarray(W, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_shapes(block, W, b)
    node = _AffineNode(layer, W, b, block.data)
    out = node.forward(block.data)
    if tape is not None:
        tape.nodes.append(node)
    return ExtendedBlock(out, block.dim)


def _activation_forward(name, data, dim):
    # the reverse sweep needs one derivative beyond the block's order
    upto = 1 if data.shape[0] == 1 else (2 if data.shape[0] == 1 + dim else 3)
    derivs = activation_derivatives(name, data[0], upto)
    s0, s1, s2, _ = derivs
    out = np.empty_like(data)
    out[0] = s0
    if data.shape[0] == 1:
        return out, derivs
    jz = data[1:1 + dim]
    np.multiply(jz, s1, out=out[1:1 + dim])
    if data.shape[0] > 1 + dim:
        d2 = out[1 + dim:]
        np.multiply(jz, jz, out=d2)
        d2 *= s2
        d2 += s1 * data[1 + dim:]
    return out, derivs


def _activation_backward(node: _ActivationNode, g: np.ndarray) -> np.ndarray:
    """Adjoint of the activation stage w.r.t. its input block."""
    _, s1, s2, s3 = node.derivs
    d = node.dim
    gz = np.empty_like(g)
    np.multiply(g[0], s1, out=gz[0])
    if g.shape[0] == 1:
        return gz
    gj = g[1:1 + d]
    jz = node.z[1:1 + d]
    np.multiply(gj, s1, out=gz[1:1 + d])
    acc = np.einsum("jbn,jbn->bn", gj, jz)
    if g.shape[0] > 1 + d:
        gd = g[1 + d:]
        t = gd * jz
        acc += np.einsum("jbn,jbn->bn", gd, node.z[1 + d:])
        gz[0] += s3 * np.einsum("jbn,jbn->bn", t, jz)
        t *= 2.0 * s2
        gz[1:1 + d] += t
        np.multiply(gd, s1, out=gz[1 + d:])
    gz[0] += s2 * acc
    return gz


def extend_activation(block: ExtendedBlock, act: str, tape: Tape | None = None) -> ExtendedBlock:
    """Elementwise sigma with the chain rule for jac and the pure second derivatives."""
    out, derivs = _activation_forward(act, block.data, block.dim)
    if tape is not None:
        tape.nodes.append(_ActivationNode(act, block.dim, block.data, derivs))
    return ExtendedBlock(out, block.dim)


@dataclass
class ExtendedEval:
    """Network outputs and their input derivatives at one point or a batch.

    For a single point ``value`` is (n_out,), ``jac`` and ``d2`` are (n_out, d).
    For a batch every array gains a leading batch axis.
    """

    value: np.ndarray
    jac: np.ndarray | None
    d2: np.ndarray | None
    net: str
    single: bool
    tape: Tape = field(repr=False)
    layout: list = field(repr=False)
    n_params: int = 0

    @property
    def laplacian(self) -> np.ndarray:
        return self.d2.sum(axis=-1)


def forward_extended(params: NetworkParams, net: str, x: np.ndarray, order: int = 2) -> ExtendedEval:
    """Evaluate ``net`` at ``x`` ((d,) or (B, d)) with derivative blocks.

    ``order=0`` skips the derivative channels (boundary points only need values)
    and ``order=1`` the second derivatives (the pressure only enters through its
    gradient).
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    d = params.arch.input_dim
    if pts.shape[1] != d:
        raise ValueError(f"point dimension {pts.shape[1]} != problem dimension {d}")
    if not np.all(np.isfinite(pts)):
        raise NumericError("non-finite input point")
    if order not in (0, 1, 2):
        raise ValueError(f"order must be 0, 1 or 2, got {order}")
    layers = params.layers(net)
    if not np.isfinite(params.theta(net)).all():
        bad = next(i for i, (W, b) in enumerate(layers)
                   if not (np.isfinite(W).all() and np.isfinite(b).all()))
        raise NumericError(f"non-finite parameter in {net} net, layer {bad}")
    tape = Tape()
    data = ExtendedBlock.seed(pts, order).data
    tape.input = data
    act = params.arch.activation
    # layer shapes come from the parameter layout, so the per-stage checks of
    # extend_affine/extend_activation are skipped here
    for i, (W, b) in enumerate(layers):
        node = _AffineNode(i, W, b, data)
        tape.nodes.append(node)
        data = node.forward(data)
        if i < len(layers) - 1:
            out, derivs = _activation_forward(act, data, d)
            tape.nodes.append(_ActivationNode(act, d, data, derivs))
            data = out
    block = ExtendedBlock(data, d)
    layout = params.layout(net)
    value, jac, d2 = block.value, block.jac, block.d2
    if single:
        value = value[0]
        jac = None if jac is None else jac[0]
        d2 = None if d2 is None else d2[0]
    return ExtendedEval(value, jac, d2, net, single, tape, layout, layout_size(layout))


def backward_params(ev: ExtendedEval, seed) -> np.ndarray:
    """Gradient of <seed, (value, jac, d2)> w.r.t. the parameters of ``ev.net``.

    ``seed`` is a tuple (g_value, g_jac, g_d2) shaped like the eval's arrays;
    ``None`` entries count as zero.
    """
    g_value, g_jac, g_d2 = seed
    out = ev.tape.nodes[-1]
    n_out = out.W.shape[0]
    C, B = out.x.shape[:2]
    d = ev.tape.input.shape[2]
    g = np.zeros((C, B, n_out))

    def _as_batch(arr, shape, label):
        arr = np.asarray(arr, dtype=np.float64)
        want = shape[1:] if ev.single else shape
        if arr.shape != want:
            raise ValueError(f"seed {label} has shape {arr.shape}, expected {want}")
        return arr.reshape(shape)

    if g_value is not None:
        g[0] = _as_batch(g_value, (B, n_out), "value")
    if (g_jac is not None and C == 1) or (g_d2 is not None and C < 1 + 2 * d):
        raise ValueError("seed carries derivative adjoints the eval did not compute")
    if g_jac is not None:
        g[1:1 + d] = _as_batch(g_jac, (B, n_out, d), "jac").transpose(2, 0, 1)
    if g_d2 is not None:
        g[1 + d:] = _as_batch(g_d2, (B, n_out, d), "d2").transpose(2, 0, 1)
    return ev.tape.backward(g, ev.layout, ev.n_params)
