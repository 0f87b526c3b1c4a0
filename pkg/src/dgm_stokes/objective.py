"""Monte-Carlo objective: residual, divergence and boundary terms, and their gradient."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import backward_params, forward_extended
from .errors import NumericError
from .network import NetworkParams
from .problem import FieldBundle, StokesProblem, apply_operator


@dataclass(frozen=True)
class LossBreakdown:
    residual: float
    divergence: float
    boundary: float

    @property
    def total(self) -> float:
        return self.residual + self.divergence + self.boundary

    def as_row(self) -> dict:
        return {"J": self.total, "residual": self.residual, "divergence": self.divergence,
                "boundary": self.boundary}


def _check_finite(arr, pts, what):
    bad = ~np.all(np.isfinite(arr.reshape(len(pts), -1)), axis=1)
    if np.any(bad):
        raise NumericError(f"non-finite {what} at point {pts[bad][0].tolist()}")


def _evaluate(params, problem, interior, boundary, need_grad, weights, data=None):
    interior = np.atleast_2d(np.asarray(interior, dtype=np.float64))
    boundary = np.atleast_2d(np.asarray(boundary, dtype=np.float64))
    if len(interior) == 0 or len(boundary) == 0:
        raise ValueError("objective needs non-empty interior and boundary batches")
    w_res, w_div, w_bnd = weights
    n_i, n_b = len(interior), len(boundary)

    ev_u = forward_extended(params, "velocity", interior)
    ev_p = forward_extended(params, "pressure", interior, order=1)
    ev_b = forward_extended(params, "velocity", boundary, order=0)
    if not (np.isfinite(ev_u.value).all() and np.isfinite(ev_p.jac).all()
            and np.isfinite(ev_b.value).all()):
        _check_finite(ev_u.value, interior, "velocity")
        _check_finite(ev_p.jac, interior, "pressure gradient")
        _check_finite(ev_b.value, boundary, "boundary velocity")

    bundle = FieldBundle(ev_u.value, ev_u.jac, ev_u.d2, ev_p.jac[:, 0, :])
    f, g = data if data is not None else (None, None)
    res = apply_operator(problem, bundle, interior, f)
    div = bundle.divergence
    mismatch = ev_b.value - (problem.boundary(boundary) if g is None else g)

    loss = LossBreakdown(
        residual=w_res * float(np.sum(res * res)) / n_i,
        divergence=w_div * float(np.sum(div * div)) / n_i,
        boundary=w_bnd * float(np.sum(mismatch * mismatch)) / n_b,
    )
    if not need_grad:
        return loss, None

    d = problem.dim
    g_res = 2.0 * w_res * res / n_i
    g_div = 2.0 * w_div * div / n_i
    g_jac = np.zeros((n_i, d, d))
    g_jac[:, np.arange(d), np.arange(d)] = g_div[:, None]
    g_d2 = np.repeat(-problem.nu * g_res[:, :, None], d, axis=2)
    grad_u = backward_params(ev_u, (problem.alpha * g_res, g_jac, g_d2))
    grad_u += backward_params(ev_b, (2.0 * w_bnd * mismatch / n_b, None, None))
    grad_p = backward_params(ev_p, (None, g_res[:, None, :], None))
    return loss, np.concatenate([grad_u, grad_p])


def batch_objective(params: NetworkParams, problem: StokesProblem, interior, boundary,
                    weights=(1.0, 1.0, 1.0), data=None) -> LossBreakdown:
    """Interior terms averaged over the interior batch, boundary term over the boundary batch.

    ``data`` is as for ``loss_and_gradient``.
    """
    return _evaluate(params, problem, interior, boundary, False, weights, data)[0]


def objective_gradient(params: NetworkParams, problem: StokesProblem, interior, boundary,
                       weights=(1.0, 1.0, 1.0)) -> np.ndarray:
    """d(total)/d(theta1 + theta2), concatenated in that order."""
    return _evaluate(params, problem, interior, boundary, True, weights)[1]


def loss_and_gradient(params: NetworkParams, problem: StokesProblem, interior, boundary,
                      weights=(1.0, 1.0, 1.0), data=None) -> tuple[LossBreakdown, np.ndarray]:
    """Loss and gradient together. ``data`` optionally holds precomputed
    (forcing at interior, boundary values at boundary) so repeated batches
    from a fixed dataset skip re-evaluating them."""
    return _evaluate(params, problem, interior, boundary, True, weights, data)


def point_loss(params: NetworkParams, problem: StokesProblem, x, r) -> float:
    """G(theta, s) for one paired sample s = (x, r)."""
    return batch_objective(params, problem, np.atleast_2d(x), np.atleast_2d(r)).total


def point_gradient(params: NetworkParams, problem: StokesProblem, x, r) -> np.ndarray:
    return objective_gradient(params, problem, np.atleast_2d(x), np.atleast_2d(r))


def paired_objective(params: NetworkParams, problem: StokesProblem, interior, boundary) -> float:
    """(1/N) sum_i G(theta, (x_i, r_i)) over index-paired samples.

    For equal-length batches this coincides with ``batch_objective(...).total``.
    """
    interior = np.atleast_2d(interior)
    boundary = np.atleast_2d(boundary)
    if len(interior) != len(boundary):
        raise ValueError(
            f"paired objective needs equal counts, got {len(interior)} and {len(boundary)}")
    return float(np.mean([point_loss(params, problem, x, r) for x, r in zip(interior, boundary)]))
