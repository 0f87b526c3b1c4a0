"""Finite-difference and brute-force oracles.

Nothing here calls into the autodiff engine except ``check_unbiasedness``,
whose job is to check that engine's gradients against each other. The FD
routines only evaluate black-box callables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import NetworkParams, predict
from .problem import StokesProblem

H_FIRST = 1e-5
H_SECOND = 1e-4


def fd_input_derivatives(fn, x, h: float = H_FIRST, h2: float = H_SECOND):
    """Central-difference Jacobian and pure second derivatives of ``fn`` at ``x``.

    ``fn`` maps a (d,) point to an (n,) vector (scalars are promoted).
    Returns (jac (n, d), d2 (n, d)).
    """
    x = np.asarray(x, dtype=np.float64)
    d = x.size
    f0 = np.atleast_1d(np.asarray(fn(x), dtype=np.float64))
    jac = np.empty((f0.size, d))
    d2 = np.empty((f0.size, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0
        fp = np.atleast_1d(fn(x + h * e))
        fm = np.atleast_1d(fn(x - h * e))
        jac[:, j] = (fp - fm) / (2 * h)
        fp2 = np.atleast_1d(fn(x + h2 * e))
        fm2 = np.atleast_1d(fn(x - h2 * e))
        d2[:, j] = (fp2 - 2 * f0 + fm2) / (h2 * h2)
    return jac, d2


def fd_param_gradient(loss, theta, h: float = 1e-6) -> np.ndarray:
    """Per-parameter central differences with step h * max(1, |theta_k|)."""
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.empty_like(theta)
    work = theta.copy()
    for k in range(theta.size):
        step = h * max(1.0, abs(theta[k]))
        work[k] = theta[k] + step
        fp = loss(work)
        work[k] = theta[k] - step
        fm = loss(work)
        work[k] = theta[k]
        grad[k] = (fp - fm) / (2 * step)
    return grad


def fd_field_terms(field, problem: StokesProblem, x, r, h: float = H_FIRST,
                   h2: float = H_SECOND) -> tuple[float, float, float]:
    """(|G|^2, div^2, |U - g|^2) at one paired sample, derivatives by FD.

    ``field`` maps a (d,) point to (u (d,), p scalar).
    """
    x = np.asarray(x, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    d = problem.dim

    def packed(pt):
        u, p = field(pt)
        return np.concatenate([np.atleast_1d(u), np.atleast_1d(p)])

    jac, d2 = fd_input_derivatives(packed, x, h, h2)
    vals = packed(x)
    u = vals[:d]
    lap = d2[:d].sum(axis=1)
    grad_p = jac[d]
    res = problem.alpha * u - problem.nu * lap + grad_p - problem.forcing(x)
    div = np.trace(jac[:d, :d])
    mismatch = np.atleast_1d(field(r)[0]) - problem.boundary(r)
    return float(res @ res), float(div * div), float(mismatch @ mismatch)


def fd_objective(field, problem: StokesProblem, interior, boundary) -> tuple[float, float, float]:
    """Residual, divergence and boundary terms averaged over their own batches, by FD."""
    interior = np.atleast_2d(interior)
    boundary = np.atleast_2d(boundary)
    res = div = 0.0
    for x in interior:
        a, b, _ = fd_field_terms(field, problem, x, boundary[0])
        res += a
        div += b
    bnd = 0.0
    for r in boundary:
        mismatch = np.atleast_1d(field(r)[0]) - problem.boundary(r)
        bnd += float(mismatch @ mismatch)
    return res / len(interior), div / len(interior), bnd / len(boundary)


def network_field(params: NetworkParams):
    """Black-box (u, p) evaluator for a network, built on the plain forward pass."""
    def field(pt):
        return predict(params, pt)
    return field


@dataclass
class UnbiasednessReport:
    max_rel_deviation: float
    n_interior: int
    n_boundary: int
    tolerance: float = 1e-10

    @property
    def passed(self) -> bool:
        return self.max_rel_deviation <= self.tolerance

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"unbiasedness {status}: max relative deviation {self.max_rel_deviation:.3e} "
                f"(tol {self.tolerance:g}) over {self.n_interior} interior / "
                f"{self.n_boundary} boundary samples")


def check_unbiasedness(params: NetworkParams, problem: StokesProblem, dataset,
                       tolerance: float = 1e-10) -> UnbiasednessReport:
    """Mean of single-sample gradients vs. the full-dataset gradient.

    A sample is an interior point (residual and divergence terms) or a boundary
    point (boundary term); drawing x and r independently and uniformly from the
    dataset makes the expected single-sample gradient the full gradient.
    """
    from .objective import objective_gradient

    interior, boundary = dataset.interior, dataset.boundary
    full = objective_gradient(params, problem, interior, boundary)
    acc_i = np.zeros_like(full)
    for x in interior:
        acc_i += objective_gradient(params, problem, x[None], boundary[:1], weights=(1, 1, 0))
    acc_b = np.zeros_like(full)
    for r in boundary:
        acc_b += objective_gradient(params, problem, interior[:1], r[None], weights=(0, 0, 1))
    mean = acc_i / len(interior) + acc_b / len(boundary)
    scale = max(np.max(np.abs(full)), np.finfo(float).tiny)
    dev = float(np.max(np.abs(mean - full)) / scale)
    return UnbiasednessReport(dev, len(interior), len(boundary), tolerance)
