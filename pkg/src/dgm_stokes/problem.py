"""General Stokes problem instances on the unit square/cube.

    alpha u - nu lap(u) + grad(p) = f   in (0,1)^d
                          div(u) = 0   in (0,1)^d
                               u = g   on the boundary

All point-valued callables are vectorised: they take an (N, d) array and
return (N, d) (or (N,) for the pressure).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, DomainError

PI = np.pi
BOUNDARY_TOL = 1e-12

PROBLEM_NAMES = ("stokes2d", "stokes3d", "general_stokes2d", "general_stokes3d",
                 "cavity2d", "cavity3d")


@dataclass
class StokesProblem:
    alpha: float
    nu: float
    dim: int
    forcing: Callable[[np.ndarray], np.ndarray]
    boundary: Callable[[np.ndarray], np.ndarray]
    exact: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None
    name: str = ""
    cavity: "CavitySpec | None" = field(default=None, repr=False)

    def __post_init__(self):
        if not self.nu > 0:
            raise ConfigurationError(f"viscosity nu must be > 0, got {self.nu}")
        # alpha = 0 is the classical Stokes case used by the 2D/3D manufactured runs
        if self.alpha < 0:
            raise ConfigurationError(f"alpha must be >= 0, got {self.alpha}")
        if self.dim < 2:
            raise ConfigurationError(f"dim must be >= 2, got {self.dim}")


@dataclass(frozen=True)
class CavitySpec:
    dim: int = 2
    lid_velocity: tuple[float, ...] | None = None

    @property
    def lid(self) -> np.ndarray:
        if self.lid_velocity is None:
            v = np.zeros(self.dim)
            v[0] = 1.0
            return v
        v = np.asarray(self.lid_velocity, dtype=np.float64)
        if v.shape != (self.dim,):
            raise ConfigurationError(f"lid_velocity must have {self.dim} components")
        return v


# -- manufactured solutions ---------------------------------------------------

def exact_solution_2d(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    a, b = PI * x[:, 0], PI * x[:, 1]
    u = np.empty_like(x)
    u[:, 0] = 2.0 * np.sin(a) ** 2 * np.sin(b) * np.cos(b) * PI
    u[:, 1] = -2.0 * np.sin(a) * np.sin(b) ** 2 * np.cos(a) * PI
    p = np.cos(a) * np.cos(b)
    return (u[0], p[0]) if single else (u, p)


def _sq(t):
    """sin^2(pi t) and its first two derivatives."""
    return np.sin(PI * t) ** 2, PI * np.sin(2 * PI * t), 2 * PI ** 2 * np.cos(2 * PI * t)


def _s2(t):
    """sin(2 pi t) and its first two derivatives."""
    return np.sin(2 * PI * t), 2 * PI * np.cos(2 * PI * t), -4 * PI ** 2 * np.sin(2 * PI * t)


# component k of the 3D field is built from the cyclic shift (k, k+1, k+2)
_CYCLE = ((0, 1, 2), (1, 2, 0), (2, 0, 1))


def exact_solution_3d(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    S = [_sq(x[:, i])[0] for i in range(3)]
    T = [_s2(x[:, i])[0] for i in range(3)]
    u = np.empty_like(x)
    for k, (a, b, c) in enumerate(_CYCLE):
        u[:, k] = S[a] * (T[b] * S[c] - S[b] * T[c])
    p = np.sin(PI * x[:, 0]) * np.sin(PI * x[:, 1]) * np.cos(PI * x[:, 2])
    return (u[0], p[0]) if single else (u, p)


def _laplacian_2d(x):
    a, b = PI * x[:, 0], PI * x[:, 1]
    lap = np.empty_like(x)
    # u1 = pi sin^2(a) sin(2b), u2 = -pi sin(2a) sin^2(b)
    lap[:, 0] = PI * (2 * PI ** 2 * np.cos(2 * a) * np.sin(2 * b)
                      - 4 * PI ** 2 * np.sin(a) ** 2 * np.sin(2 * b))
    lap[:, 1] = -PI * (-4 * PI ** 2 * np.sin(2 * a) * np.sin(b) ** 2
                       + 2 * PI ** 2 * np.sin(2 * a) * np.cos(2 * b))
    return lap


def _pressure_grad_2d(x):
    a, b = PI * x[:, 0], PI * x[:, 1]
    return np.stack([-PI * np.sin(a) * np.cos(b), -PI * np.cos(a) * np.sin(b)], axis=1)


def _laplacian_3d(x):
    S = [_sq(x[:, i]) for i in range(3)]
    T = [_s2(x[:, i]) for i in range(3)]
    lap = np.empty_like(x)
    for k, (a, b, c) in enumerate(_CYCLE):
        lap[:, k] = (S[a][2] * (T[b][0] * S[c][0] - S[b][0] * T[c][0])
                     + S[a][0] * (T[b][2] * S[c][0] - S[b][2] * T[c][0])
                     + S[a][0] * (T[b][0] * S[c][2] - S[b][0] * T[c][2]))
    return lap


def _pressure_grad_3d(x):
    sx, sy, sz = (np.sin(PI * x[:, i]) for i in range(3))
    cx, cy, cz = (np.cos(PI * x[:, i]) for i in range(3))
    return PI * np.stack([cx * sy * cz, sx * cy * cz, -sx * sy * sz], axis=1)


_CLOSED_FORMS = {
    2: (exact_solution_2d, _laplacian_2d, _pressure_grad_2d),
    3: (exact_solution_3d, _laplacian_3d, _pressure_grad_3d),
}


def derive_forcing(alpha: float, nu: float, dim: int) -> Callable[[np.ndarray], np.ndarray]:
    """f = alpha u - nu lap(u) + grad(p) for the manufactured solution in ``dim``."""
    if dim not in _CLOSED_FORMS:
        raise ConfigurationError(f"no manufactured solution for dim={dim}")
    exact, lap, gradp = _CLOSED_FORMS[dim]

    def forcing(x):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        u, _ = exact(x)
        f = alpha * u - nu * lap(x) + gradp(x)
        return f[0] if single else f

    return forcing


def manufactured(dim: int, alpha: float, nu: float, name: str = "") -> StokesProblem:
    if dim not in _CLOSED_FORMS:
        raise ConfigurationError(f"no manufactured solution for dim={dim}")
    exact = _CLOSED_FORMS[dim][0]

    def boundary(x):
        return exact(x)[0]

    return StokesProblem(alpha=alpha, nu=nu, dim=dim, forcing=derive_forcing(alpha, nu, dim),
                         boundary=boundary, exact=exact, name=name or f"manufactured{dim}d")


# -- lid-driven cavity -----------------------------------------------------------

def on_boundary(x: np.ndarray, tol: float = BOUNDARY_TOL) -> np.ndarray:
    x = np.atleast_2d(x)
    inside = np.all((x >= -tol) & (x <= 1 + tol), axis=1)
    touching = np.any((np.abs(x) <= tol) | (np.abs(x - 1) <= tol), axis=1)
    return inside & touching


def cavity_boundary(spec: CavitySpec, x: np.ndarray) -> np.ndarray:
    """Lid velocity on the top face (last coordinate = 1), zero on the other faces.

    Points on an edge shared with the lid get the lid value.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[1] != spec.dim:
        raise ValueError(f"point dimension {pts.shape[1]} != cavity dimension {spec.dim}")
    ok = on_boundary(pts)
    if not np.all(ok):
        bad = pts[~ok][0]
        raise DomainError(f"point {bad.tolist()} is not on the cavity boundary")
    g = np.zeros_like(pts)
    lid = np.abs(pts[:, -1] - 1.0) <= BOUNDARY_TOL
    g[lid] = spec.lid
    return g[0] if single else g


def cavity(dim: int, nu: float = 1.0, alpha: float = 0.0,
           lid_velocity: tuple[float, ...] | None = None) -> StokesProblem:
    spec = CavitySpec(dim, lid_velocity)

    def forcing(x):
        return np.zeros_like(np.asarray(x, dtype=np.float64))

    def boundary(x):
        return cavity_boundary(spec, x)

    return StokesProblem(alpha=alpha, nu=nu, dim=dim, forcing=forcing, boundary=boundary,
                         exact=None, name=f"cavity{dim}d", cavity=spec)


def make_problem(name: str, alpha: float | None = None, nu: float | None = None) -> StokesProblem:
    """Problem by config name; ``alpha``/``nu`` override the defaults."""
    defaults = {
        "stokes2d": (2, 0.0, 0.025),
        "stokes3d": (3, 0.0, 0.025),
        "general_stokes2d": (2, 1.0, 1.0),
        "general_stokes3d": (3, 1.0, 1.0),
        "cavity2d": (2, 0.0, 1.0),
        "cavity3d": (3, 0.0, 1.0),
    }
    if name not in defaults:
        raise ConfigurationError(f"unknown problem {name!r}; expected one of {PROBLEM_NAMES}")
    dim, a, n = defaults[name]
    a = a if alpha is None else float(alpha)
    n = n if nu is None else float(nu)
    if name.startswith("cavity"):
        return cavity(dim, nu=n, alpha=a)
    return manufactured(dim, a, n, name=name)


# -- the operator G ---------------------------------------------------------------

@dataclass
class FieldBundle:
    """Velocity value/jac/pure-d2 and pressure gradient at a batch of points.

    Shapes: u (N, d), u_jac (N, d, d), u_d2 (N, d, d), p_grad (N, d).
    """

    u: np.ndarray
    u_jac: np.ndarray | None
    u_d2: np.ndarray | None
    p_grad: np.ndarray | None

    @property
    def divergence(self) -> np.ndarray:
        return np.trace(self.u_jac, axis1=-2, axis2=-1)

    @property
    def laplacian(self) -> np.ndarray:
        return self.u_d2.sum(axis=-1)


def apply_operator(problem: StokesProblem, bundle: FieldBundle, x: np.ndarray,
                   f: np.ndarray | None = None) -> np.ndarray:
    """alpha U - nu lap(U) + grad(P) - f(x), componentwise.

    ``f`` may carry precomputed forcing values at ``x``.
    """
    if bundle.u_d2 is None or bundle.p_grad is None:
        raise ValueError("operator needs the velocity second derivatives and the pressure gradient")
    u = np.asarray(bundle.u)
    if u.shape[-1] != problem.dim or bundle.p_grad.shape[-1] != problem.dim:
        raise ValueError(
            f"bundle dimension {u.shape[-1]} does not match problem dimension {problem.dim}")
    if f is None:
        f = problem.forcing(x)
    return problem.alpha * u - problem.nu * bundle.laplacian + bundle.p_grad - f
