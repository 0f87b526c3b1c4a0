"""Error norms against exact solutions and evaluation grids for heatmaps."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .network import NetworkParams, predict
from .problem import StokesProblem


def _diff_norms(pred, exact) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.float64)
    exact = np.asarray(exact, dtype=np.float64)
    if pred.shape != exact.shape:
        raise ValueError(f"field shapes differ: {pred.shape} vs {exact.shape}")
    if pred.size == 0:
        raise ValueError("empty field")
    diff = pred - exact
    if diff.ndim == 1:
        return np.abs(diff)
    return np.sqrt(np.sum(diff.reshape(len(diff), -1) ** 2, axis=1))


def err_l1(pred, exact) -> float:
    """Mean over points of |U_i - u_i| (Euclidean norm for vector fields)."""
    return float(np.mean(_diff_norms(pred, exact)))


def err_l2(pred, exact) -> float:
    """Mean over points of |U_i - u_i|^2. No square root is taken."""
    pred = np.asarray(pred, dtype=np.float64)
    exact = np.asarray(exact, dtype=np.float64)
    if pred.shape != exact.shape:
        raise ValueError(f"field shapes differ: {pred.shape} vs {exact.shape}")
    if pred.size == 0:
        raise ValueError("empty field")
    diff = (pred - exact).reshape(len(pred), -1)
    return float(np.mean(np.sum(diff * diff, axis=1)))


def gauge_fixed(p: np.ndarray) -> np.ndarray:
    return p - np.mean(p)


def grid_points(dim: int, resolution: int = 101, slice_z: float | None = 0.5) -> np.ndarray:
    """Uniform nodes on [0,1]^dim including the endpoints; 3D is cut at z = slice_z
    unless ``slice_z`` is None."""
    if slice_z is not None and not 0.0 <= slice_z <= 1.0:
        raise ValueError(f"slice coordinate {slice_z} outside [0, 1]")
    axis = np.linspace(0.0, 1.0, resolution)
    if dim == 2 or (dim == 3 and slice_z is not None):
        X, Y = np.meshgrid(axis, axis, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel()])
        if dim == 3:
            pts = np.column_stack([pts, np.full(len(pts), slice_z)])
        return pts
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


@dataclass
class EvalGrid:
    points: np.ndarray
    U: np.ndarray
    P: np.ndarray
    u: np.ndarray | None = None
    p: np.ndarray | None = None
    resolution: int = 101
    slice_z: float | None = None

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def err_u(self) -> np.ndarray | None:
        return None if self.u is None else _diff_norms(self.U, self.u)

    @property
    def err_p(self) -> np.ndarray | None:
        if self.p is None:
            return None
        return np.abs(gauge_fixed(self.P) - gauge_fixed(self.p))

    def errors(self) -> dict:
        if self.u is None:
            return {}
        return {
            "errL1": err_l1(self.U, self.u),
            "errL2": err_l2(self.U, self.u),
            "errL1_p": err_l1(gauge_fixed(self.P), gauge_fixed(self.p)),
            "errL2_p": err_l2(gauge_fixed(self.P), gauge_fixed(self.p)),
        }

    def to_csv(self, path) -> None:
        d = self.dim
        coord_names = ["x", "y", "z"][:d] if d <= 3 else [f"x{i + 1}" for i in range(d)]
        header = coord_names + [f"U{i + 1}" for i in range(d)] + ["P"]
        if self.u is not None:
            header += [f"u{i + 1}" for i in range(d)] + ["p", "errU", "errP"]
        err_u, err_p = self.err_u, self.err_p
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k in range(len(self.points)):
                row = list(self.points[k]) + list(self.U[k]) + [self.P[k]]
                if self.u is not None:
                    row += list(self.u[k]) + [self.p[k], err_u[k], err_p[k]]
                w.writerow([f"{v:.17g}" for v in row])


def eval_grid(params: NetworkParams, problem: StokesProblem, resolution: int = 101,
              slice_z: float | None = 0.5, points: np.ndarray | None = None) -> EvalGrid:
    if points is None:
        points = grid_points(problem.dim, resolution, slice_z if problem.dim == 3 else None)
    U, P = predict(params, points)
    u = p = None
    if problem.exact is not None:
        u, p = problem.exact(points)
    return EvalGrid(points, U, P, u, p, resolution, slice_z if problem.dim == 3 else None)


def velocity_errors(params: NetworkParams, problem: StokesProblem, resolution: int = 101,
                    slice_z: float | None = 0.5) -> tuple[float, float]:
    """(errL1, errL2) of the velocity on a uniform grid."""
    g = eval_grid(params, problem, resolution, slice_z)
    return err_l1(g.U, g.u), err_l2(g.U, g.u)


def divergence_at(params: NetworkParams, points: np.ndarray) -> np.ndarray:
    from .autodiff import forward_extended
    ev = forward_extended(params, "velocity", np.atleast_2d(points))
    return np.trace(ev.jac, axis1=1, axis2=2)


def top_face_points(dim: int, n: int = 1600) -> np.ndarray:
    """``n`` cell-centred points on the open lid face (last coordinate = 1).

    In 3D ``n`` is rounded to a square number of points.
    """
    if dim == 2:
        s = (np.arange(n) + 0.5) / n
        return np.column_stack([s, np.ones(n)])
    m = int(round(np.sqrt(n)))
    s = (np.arange(m) + 0.5) / m
    X, Y = np.meshgrid(s, s, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel(), np.ones(m * m)])


def interior_grid(dim: int, resolution: int = 101, slice_z: float | None = 0.5) -> np.ndarray:
    """``resolution`` nodes per axis strictly inside (0, 1)."""
    axis = np.linspace(0.0, 1.0, resolution + 2)[1:-1]
    if dim == 2 or slice_z is not None:
        X, Y = np.meshgrid(axis, axis, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel()])
        if dim == 3:
            pts = np.column_stack([pts, np.full(len(pts), slice_z)])
        return pts
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def cavity_metrics(params: NetworkParams, problem: StokesProblem, n_lid: int = 1600,
                   resolution: int = 101) -> dict:
    """Lid mismatch, grid divergence, and the horizontal velocity at two probe points."""
    d = problem.dim
    lid = top_face_points(d, n_lid)
    U_lid, _ = predict(params, lid)
    g = problem.boundary(lid)
    lid_mse = float(np.mean(np.sum((U_lid - g) ** 2, axis=1)))
    div = divergence_at(params, interior_grid(d, resolution))
    mid = [0.5] * (d - 1)
    U_top, _ = predict(params, np.array(mid + [0.95]))
    U_bottom, _ = predict(params, np.array(mid + [0.1]))
    return {
        "lid_mse": lid_mse,
        "divergence_mse": float(np.mean(div ** 2)),
        "u_top": float(U_top[0]),
        "u_bottom": float(U_bottom[0]),
    }


def field_points(dim: int, n_per_axis: int | None = None) -> np.ndarray:
    """Regular test grid for quiver/streamline output: 40^2 = 1600 points in 2D,
    20^3 = 8000 in 3D unless ``n_per_axis`` says otherwise."""
    if n_per_axis is None:
        n_per_axis = 40 if dim == 2 else 20
    return grid_points(dim, n_per_axis, None)


def axis_slice_points(axis: int, value: float = 0.5, resolution: int = 41) -> np.ndarray:
    """3D nodes on the plane x_axis = value."""
    s = np.linspace(0.0, 1.0, resolution)
    A, B = np.meshgrid(s, s, indexing="ij")
    cols = [A.ravel(), B.ravel()]
    cols.insert(axis, np.full(A.size, value))
    return np.column_stack(cols)
