"""Strain-limiting phase-field energy and its first variations.

With ``gamma = (1 - kappa) v^2 + kappa`` and ``s = |T|^2 = gamma |grad u|^2``
the bulk density is ``s / (2 (1 + beta^alpha s^alpha)^(1/alpha))``.  It is
concave and increasing in ``s`` with derivative ``1 / (2 D)`` where
``D = (1 + beta^alpha s^alpha)^(1/alpha + 1)``; both minimisation half-steps
rely on that.

Two evaluations coexist:

* the discrete, mass-lumped functional used by the solver and the
  estimator (``energy``, ``residual_A``, ``residual_B``).  The lumped
  ``pi_h(v^2)`` enters the coefficient through its value at the element
  centroid, so every coefficient is elementwise constant;
* the continuous functional with a fixed degree-5 triangle rule
  (``continuous_energy``, ``directional_derivative``).  These only use
  ``+ - * / **`` on array entries, so object arrays of extended-precision
  numbers pass through unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fespace import ConstraintSet, ScalarField
from .mesh import Mesh
from .quadrature import TRI_POINTS, TRI_WEIGHTS

# |T| above 1e8 switches the strain-limiting factor to its logarithmic form.
_S_BIG = 1e16


@dataclass(frozen=True)
class ModelParams:
    """Material and regularisation constants.

    The defaults are a declared choice, not measured values: with ``beta = 1``
    and ``lambda_c = 1`` the driving force of the phase field never exceeds
    the toughness term and no crack can form.
    """

    alpha: float = 1.0
    beta: float = 0.1
    kappa: float = 1e-6
    eps: float = 0.02
    lambda_c: float = 0.01

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.beta >= 0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")
        if not 0 < self.kappa < 1:
            raise ValueError(f"kappa must lie in (0, 1), got {self.kappa}")
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if not self.lambda_c > 0:
            raise ValueError(f"lambda_c must be positive, got {self.lambda_c}")

    @property
    def rho(self) -> float:
        return self.lambda_c * self.eps

    @property
    def delta(self) -> float:
        return self.lambda_c / (4.0 * self.eps)


@dataclass(frozen=True)
class EnergyBreakdown:
    bulk: float
    surface: float

    @property
    def total(self) -> float:
        return self.bulk + self.surface


def limiter_power(s, p: ModelParams, k: float):
    """``(1 + beta^alpha s^alpha)^k`` for ``s = |T|^2 >= 0``."""
    s = np.asarray(s)
    if s.dtype == object:
        return (1 + p.beta**p.alpha * s**p.alpha) ** k
    s = s.astype(float)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        out = (1.0 + p.beta**p.alpha * s**p.alpha) ** k
        big = s > _S_BIG
        if np.any(big) and p.beta > 0:
            log_term = np.logaddexp(0.0, p.alpha * np.log(p.beta * s[big]))
            out[big] = np.exp(k * log_term)
    return out


def coefficient(u_grad, v_sq_lumped, p: ModelParams):
    """Diffusion coefficient ``gamma / D`` of the u-equation."""
    u_grad = np.asarray(u_grad, dtype=float)
    gamma = (1.0 - p.kappa) * np.asarray(v_sq_lumped, dtype=float) + p.kappa
    s = gamma * np.sum(u_grad**2, axis=-1)
    return gamma / limiter_power(s, p, 1.0 / p.alpha + 1.0)


def bulk_density(s, p: ModelParams):
    """``s / (2 (1 + beta^alpha s^alpha)^(1/alpha))``, bounded by ``1/(2 beta)``."""
    s = np.asarray(s)
    if s.dtype == object or p.beta == 0:
        return 0.5 * s / limiter_power(s, p, 1.0 / p.alpha)
    # (1 + (beta s)^-alpha)^(-1/alpha) <= 1 holds in floating point as well
    with np.errstate(divide="ignore", over="ignore"):
        return (0.5 / p.beta) * (1.0 + (p.beta * s.astype(float)) ** -p.alpha) ** (-1.0 / p.alpha)


# ----------------------------------------------------------------------
# Discrete (lumped) functional
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class ElementState:
    """Elementwise quantities of the lumped functional at a pair (u, v)."""

    grad_u: np.ndarray
    grad_v: np.ndarray
    gamma: np.ndarray  # (1-kappa) * centroid value of pi_h(v^2) + kappa
    s: np.ndarray  # |T_h^pi|^2
    limiter: np.ndarray  # (1 + beta^alpha s^alpha)^(1/alpha + 1)

    @property
    def grad_u_sq(self) -> np.ndarray:
        return np.sum(self.grad_u**2, axis=1)


def _values(f, mesh: Mesh) -> np.ndarray:
    if isinstance(f, ScalarField):
        f.check(mesh)
        return f.values
    values = np.asarray(f, dtype=float)
    if values.shape != (mesh.n_vertices,):
        raise ValueError("nodal data does not match the mesh")
    return values


def element_state(u, v, mesh: Mesh, p: ModelParams) -> ElementState:
    uv, vv = _values(u, mesh), _values(v, mesh)
    geo = mesh.geometry
    t = mesh.triangles
    gu = geo.gradient(t, uv)
    gv = geo.gradient(t, vv)
    gamma = (1.0 - p.kappa) * np.mean(vv[t] ** 2, axis=1) + p.kappa
    s = gamma * np.sum(gu**2, axis=1)
    return ElementState(gu, gv, gamma, s, limiter_power(s, p, 1.0 / p.alpha + 1.0))


def energy(u, v, mesh: Mesh, p: ModelParams) -> EnergyBreakdown:
    """Mass-lumped energy split into bulk and surface parts."""
    es = element_state(u, v, mesh, p)
    vv = _values(v, mesh)
    geo = mesh.geometry
    bulk = np.sum(geo.area * bulk_density(es.s, p))
    surface = p.rho * np.sum(geo.area * np.sum(es.grad_v**2, axis=1)) + p.delta * np.sum(
        geo.lumped_weight * (1.0 - vv) ** 2
    )
    return EnergyBreakdown(float(bulk), float(surface))


def _scatter(mesh: Mesh, local: np.ndarray) -> np.ndarray:
    return np.bincount(mesh.triangles.ravel(), weights=local.ravel(), minlength=mesh.n_vertices)


def assemble_residual_A(es: ElementState, mesh: Mesh) -> np.ndarray:
    geo = mesh.geometry
    flux = (es.gamma / es.limiter)[:, None] * es.grad_u
    local = geo.area[:, None] * np.einsum("mk,mik->mi", flux, geo.grad_basis)
    return _scatter(mesh, local)


def driving_force(es: ElementState, p: ModelParams) -> np.ndarray:
    """``(1 - kappa) |grad u|^2 / D`` per element."""
    return (1.0 - p.kappa) * es.grad_u_sq / es.limiter


def assemble_residual_B(es: ElementState, v: np.ndarray, mesh: Mesh, p: ModelParams) -> np.ndarray:
    geo = mesh.geometry
    t = mesh.triangles
    diffusion = geo.area[:, None] * np.einsum("mk,mik->mi", es.grad_v, geo.grad_basis)
    reaction = (driving_force(es, p) * geo.area / 3.0)[:, None] * v[t]
    r = 2.0 * p.rho * _scatter(mesh, diffusion) + _scatter(mesh, reaction)
    return r - 2.0 * p.delta * geo.lumped_weight * (1.0 - v)


def residual_A(v, u, mesh: Mesh, p: ModelParams, constraints: ConstraintSet | None = None) -> np.ndarray:
    """First variation in u, one entry per node outside the Dirichlet set.

    ``constraints.crack_nodes`` are ignored here: crack pins constrain v only.
    """
    r = assemble_residual_A(element_state(u, v, mesh, p), mesh)
    if constraints is None:
        return r
    mask = np.ones(mesh.n_vertices, dtype=bool)
    mask[constraints.dirichlet_nodes] = False
    return r[mask]


def residual_B(u, v, mesh: Mesh, p: ModelParams, constraints: ConstraintSet | None = None) -> np.ndarray:
    """First variation in v, one entry per node outside the crack set."""
    vv = _values(v, mesh)
    r = assemble_residual_B(element_state(u, v, mesh, p), vv, mesh, p)
    if constraints is None:
        return r
    mask = np.ones(mesh.n_vertices, dtype=bool)
    mask[constraints.crack_nodes] = False
    return r[mask]


# ----------------------------------------------------------------------
# Continuous functional (quadrature, no lumping)
# ----------------------------------------------------------------------
def _raw(f):
    return f.values if isinstance(f, ScalarField) else np.asarray(f)


def _grad(mesh: Mesh, values):
    g = mesh.geometry.grad_basis
    vt = values[mesh.triangles]
    # differences against vertex 0 make constants give an exact zero
    return (vt[:, 1] - vt[:, 0])[:, None] * g[:, 1] + (vt[:, 2] - vt[:, 0])[:, None] * g[:, 2]


def _at_points(mesh: Mesh, values):
    vt = values[mesh.triangles]  # (M, 3)
    lam = TRI_POINTS  # (Q, 3)
    return vt[:, None, 0] + (vt[:, None, 1] - vt[:, None, 0]) * lam[:, 1] + (vt[:, None, 2] - vt[:, None, 0]) * lam[:, 2]


def _dot(a, b):
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1]


def continuous_energy(u, v, mesh: Mesh, p: ModelParams):
    """Energy with the exact ``v^2`` and a degree-5 quadrature rule per element.

    Accepts float or object (extended precision) nodal arrays; returns a
    scalar of the same kind.
    """
    uv, vv = _raw(u), _raw(v)
    area = mesh.geometry.area
    gu2 = _dot(_grad(mesh, uv), _grad(mesh, uv))
    gv = _grad(mesh, vv)
    vq = _at_points(mesh, vv)  # (M, Q)
    s = ((1 - p.kappa) * vq * vq + p.kappa) * gu2[:, None]
    bulk = (bulk_density(s, p) * TRI_WEIGHTS).sum(axis=1)
    mass = ((1 - vq) * (1 - vq) * TRI_WEIGHTS).sum(axis=1)
    density = bulk + p.rho * _dot(gv, gv) + p.delta * mass
    return (density * area).sum()


def directional_derivative(u, v, psi, phi, mesh: Mesh, p: ModelParams):
    """``A(v; u, psi) + B(u; v, phi)`` of the continuous functional, same quadrature."""
    uv, vv, pv, fv = _raw(u), _raw(v), _raw(psi), _raw(phi)
    area = mesh.geometry.area
    gu = _grad(mesh, uv)
    gu2 = _dot(gu, gu)
    gv = _grad(mesh, vv)
    vq = _at_points(mesh, vv)
    fq = _at_points(mesh, fv)
    gamma = (1 - p.kappa) * vq * vq + p.kappa
    limiter = limiter_power(gamma * gu2[:, None], p, 1.0 / p.alpha + 1.0)
    a_term = ((gamma / limiter) * TRI_WEIGHTS).sum(axis=1) * _dot(gu, _grad(mesh, pv))
    b_mass = ((1 - vq) * fq * TRI_WEIGHTS).sum(axis=1)
    b_bulk = ((vq * fq / limiter) * TRI_WEIGHTS).sum(axis=1) * (1 - p.kappa) * gu2
    b_term = 2 * p.rho * _dot(gv, _grad(mesh, fv)) - 2 * p.delta * b_mass + b_bulk
    return ((a_term + b_term) * area).sum()
