"""Alternating minimisation: Picard u-solves, linearised v-solves with clamping.

Both half-steps minimise a quadratic majorant of the energy (the bulk
density is concave in ``|T|^2``), so each one decreases the lumped energy
up to solver tolerance.  Linear systems are solved in increment form,
``A du = -r(u)``, which keeps an already stationary state bit-for-bit fixed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fespace import ConstraintSet, ScalarField, apply_constraints
from .mesh import Mesh
from .model import (
    ModelParams,
    assemble_residual_A,
    assemble_residual_B,
    bulk_density,
    driving_force,
    element_state,
    energy,
)

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """A linear or nonlinear solve failed to reach its tolerance."""

    def __init__(self, message, residual=None, iterate=None):
        super().__init__(message)
        self.residual = residual
        self.iterate = iterate


class AltMinCapError(SolverError):
    """The alternating loop hit ``altmin_max``; carries the last iterates."""

    def __init__(self, message, u, v, iterations, energies):
        super().__init__(message)
        self.u, self.v = u, v
        self.iterations = iterations
        self.energies = energies


@dataclass(frozen=True)
class SolverConfig:
    picard_tol: float = 1e-8
    picard_max: int = 100
    linear_tol: float = 1e-8
    linear_max: int = 5000
    linear_method: str = "direct"  # or "cg"
    xi_vn: float = 1e-6
    xi_v: float = 1e-4
    altmin_max: int = 300
    altmin_accept: bool = True
    u_method: str = "newton"  # or "picard"

    def __post_init__(self):
        for name in ("picard_tol", "linear_tol", "xi_vn", "xi_v"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("picard_max", "linear_max", "altmin_max"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.linear_method not in ("direct", "cg"):
            raise ValueError(f"unknown linear_method {self.linear_method!r}")
        if self.u_method not in ("newton", "picard"):
            raise ValueError(f"unknown u_method {self.u_method!r}")


def _cg(A, b, tol, max_iter):
    """Jacobi-preconditioned conjugate gradients."""
    x = np.zeros_like(b)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return x
    dinv = 1.0 / A.diagonal()
    r = b.copy()
    z = dinv * r
    d = z.copy()
    rz = r @ z
    for _ in range(max_iter):
        Ad = A @ d
        step = rz / (d @ Ad)
        x += step * d
        r -= step * Ad
        if np.linalg.norm(r) <= tol * bnorm:
            return x
        z = dinv * r
        rz_new = r @ z
        d = z + (rz_new / rz) * d
        rz = rz_new
    res = np.linalg.norm(b - A @ x) / bnorm
    raise SolverError(f"CG did not converge in {max_iter} iterations (relative residual {res:.3e})", res, x)


def spd_solve(A, b, tol: float = 1e-10, max_iter: int = 5000, method: str = "direct") -> np.ndarray:
    """Solve ``A x = b`` for sparse SPD ``A`` with ``||Ax - b|| <= tol ||b||``.

    ``method="direct"`` uses a sparse LU factorisation followed by iterative
    refinement; ``"cg"`` uses preconditioned conjugate gradients.
    """
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    if method == "cg":
        return _cg(A, b, tol, max_iter)
    if A.shape[0] == 0:
        return np.zeros(0)
    lu = spla.splu(A.tocsc())
    x = lu.solve(b)
    res = np.linalg.norm(b - A @ x)
    for _ in range(min(max_iter, 5)):
        if res <= tol * bnorm:
            return x
        x += lu.solve(b - A @ x)
        res = np.linalg.norm(b - A @ x)
    if res <= tol * bnorm:
        return x
    raise SolverError(f"direct solve residual {res / bnorm:.3e} above tolerance {tol:.1e}", res / bnorm, x)


def weighted_stiffness(mesh: Mesh, weight: np.ndarray) -> sp.csr_matrix:
    """``sum_tau weight_tau * area_tau * grad(xi_i) . grad(xi_j)``."""
    geo = mesh.geometry
    t = mesh.triangles
    local = np.einsum("mik,mjk->mij", geo.grad_basis, geo.grad_basis) * (weight * geo.area)[:, None, None]
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_vertices
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def _free_mask(n: int, fixed: np.ndarray) -> np.ndarray:
    mask = np.ones(n, dtype=bool)
    mask[fixed] = False
    return mask


class PicardResult(NamedTuple):
    u: ScalarField
    iterations: int
    residual: float


def tangent_stiffness(mesh: Mesh, es, p: ModelParams, floor: float = -np.inf) -> sp.csr_matrix:
    """Element Hessians of the bulk energy in u.

    Across ``grad u`` the curvature is ``gamma / D``; along it that value is
    multiplied by ``1 - 2 (1 + alpha) beta^alpha s^alpha / (1 + beta^alpha s^alpha)``,
    which turns negative past the strain-limiting knee.  ``floor`` clips the
    factor from below (the default keeps the exact, possibly indefinite Hessian).
    """
    geo = mesh.geometry
    c_perp = es.gamma / es.limiter
    with np.errstate(over="ignore", invalid="ignore"):
        ts = p.beta**p.alpha * es.s**p.alpha
        factor = 1.0 - 2.0 * (1.0 + p.alpha) * ts / (1.0 + ts)
    factor = np.where(np.isfinite(factor), factor, -1.0)
    c_par = c_perp * np.maximum(factor, floor)
    norm = np.sqrt(es.grad_u_sq)
    unit = np.divide(es.grad_u, norm[:, None], out=np.zeros_like(es.grad_u), where=norm[:, None] > 0)
    gb = geo.grad_basis
    proj = np.einsum("mik,mk->mi", gb, unit)
    local = c_perp[:, None, None] * np.einsum("mik,mjk->mij", gb, gb)
    local += (c_par - c_perp)[:, None, None] * proj[:, :, None] * proj[:, None, :]
    local *= geo.area[:, None, None]
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_vertices
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def _increment(K, rhs, cfg):
    """Linear solve for a u-increment; a slightly inexact one is kept (the outer loop corrects it)."""
    try:
        return spd_solve(K, rhs, cfg.linear_tol, cfg.linear_max, cfg.linear_method)
    except SolverError as err:
        if err.iterate is not None and err.residual < 1e-6 and np.all(np.isfinite(err.iterate)):
            return err.iterate
        raise


def _bulk(u_values, v, mesh, p):
    es = element_state(u_values, v, mesh, p)
    return float(np.sum(mesh.geometry.area * bulk_density(es.s, p))), es


def _newton_trial(mesh, v, p, es, r, u_values, free):
    """Full Newton step with the exact (possibly indefinite) Hessian, or None."""
    K = tangent_stiffness(mesh, es, p)[free][:, free]
    try:
        with np.errstate(all="ignore"):
            du = spla.splu(K.tocsc()).solve(-r)
    except RuntimeError:
        return None
    if not np.all(np.isfinite(du)):
        return None
    cand = u_values.copy()
    cand[free] += du
    e_new, es_new = _bulk(cand, v, mesh, p)
    return cand, e_new, es_new, assemble_residual_A(es_new, mesh)[free]


def picard_solve(mesh: Mesh, v: ScalarField, dirichlet: ConstraintSet, p: ModelParams,
                 cfg: SolverConfig, u0: ScalarField | None = None) -> PicardResult:
    """Iterative u-subproblem solve until the free residual sup-norm is below ``picard_tol``.

    ``cfg.u_method == "picard"``: lagged-coefficient (frozen ``gamma / D``)
    steps, each a majorise-minimise step that lowers the energy.  ``"newton"``:
    the exact-Hessian Newton step replaces the Picard step whenever it gives
    both a lower energy and a smaller residual, which recovers fast local
    convergence while keeping the energy decrease.
    """
    v.check(mesh)
    u = ScalarField.on(mesh, 0.0) if u0 is None else u0
    u.check(mesh)
    u = ScalarField(mesh.generation, u.values.copy())
    u.values[dirichlet.dirichlet_nodes] = dirichlet.dirichlet_values
    free = _free_mask(mesh.n_vertices, dirichlet.dirichlet_nodes)
    if not free.any():
        return PicardResult(u, 0, 0.0)

    e_old, es = _bulk(u.values, v, mesh, p)
    r = assemble_residual_A(es, mesh)[free]
    res = float(np.max(np.abs(r)))
    it = 0
    while res > cfg.picard_tol:
        if it == cfg.picard_max:
            raise SolverError(
                f"u-iteration stalled after {it} steps (residual {res:.3e})", res, u
            )
        it += 1
        K = weighted_stiffness(mesh, es.gamma / es.limiter)[free][:, free]
        cand = u.values.copy()
        cand[free] += _increment(K, -r, cfg)
        e_new, es_new = _bulk(cand, v, mesh, p)
        trial = (cand, e_new, es_new, assemble_residual_A(es_new, mesh)[free])
        if cfg.u_method == "newton":
            newton = _newton_trial(mesh, v, p, es, r, u.values, free)
            # Newton wins only if it beats the majorise-minimise step on energy and residual
            if newton is not None and newton[1] <= trial[1] and (
                np.max(np.abs(newton[3])) <= np.max(np.abs(trial[3]))
            ):
                trial = newton
        u = ScalarField(mesh.generation, trial[0])
        e_old, es, r = trial[1:]
        res = float(np.max(np.abs(r)))
    return PicardResult(u, it, res)


def solve_u(mesh: Mesh, v: ScalarField, dirichlet: ConstraintSet, p: ModelParams,
            cfg: SolverConfig, u0: ScalarField | None = None) -> ScalarField:
    """Minimise the lumped energy in u for fixed v under the Dirichlet data."""
    return picard_solve(mesh, v, dirichlet, p, cfg, u0).u


def v_system(mesh: Mesh, u: ScalarField, v_frozen: ScalarField, p: ModelParams):
    """Matrix and load of the v-subproblem with the limiter frozen at ``(u, v_frozen)``."""
    geo = mesh.geometry
    es = element_state(u, v_frozen, mesh, p)
    reaction = np.bincount(
        mesh.triangles.ravel(),
        weights=np.repeat(driving_force(es, p) * geo.area / 3.0, 3),
        minlength=mesh.n_vertices,
    )
    A = 2.0 * p.rho * weighted_stiffness(mesh, np.ones(mesh.n_triangles))
    A = A + sp.diags(reaction + 2.0 * p.delta * geo.lumped_weight)
    load = 2.0 * p.delta * geo.lumped_weight
    return A.tocsr(), load, es


def clamp(values: np.ndarray, xi_v: float) -> np.ndarray:
    out = values.copy()
    out[out <= xi_v] = 0.0
    out[out > 1.0] = 1.0
    return out


def solve_v(mesh: Mesh, u: ScalarField, v_init: ScalarField, crack: ConstraintSet,
            p: ModelParams, cfg: SolverConfig) -> ScalarField:
    """One linearised v-solve over non-crack nodes followed by clamping to {0} u [xi_v, 1]."""
    u.check(mesh)
    v_init.check(mesh)
    v = v_init.values.copy()
    v[crack.crack_nodes] = 0.0
    A, load, es = v_system(mesh, u, v_init, p)
    free = _free_mask(mesh.n_vertices, crack.crack_nodes)
    # residual through element gradients: exactly zero at an intact, unloaded state
    es = replace(es, grad_v=mesh.geometry.gradient(mesh.triangles, v))
    r = assemble_residual_B(es, v, mesh, p)
    if free.any():
        dv = spd_solve(A[free][:, free], -r[free], cfg.linear_tol, cfg.linear_max, cfg.linear_method)
        v[free] += dv
    return ScalarField(mesh.generation, clamp(v, cfg.xi_v))


class AltMinResult(NamedTuple):
    u: ScalarField
    v: ScalarField
    iterations: int
    energies: list
    capped: bool = False


def alternate_minimize(mesh: Mesh, u0: ScalarField, v0: ScalarField, dirichlet: ConstraintSet,
                       crack: ConstraintSet, p: ModelParams, cfg: SolverConfig) -> AltMinResult:
    """Alternate u- and v-minimisation until ``||v_n - v_{n-1}||_inf < xi_vn``.

    ``energies[k]`` is the lumped total energy after iteration ``k + 1``.
    """
    u = u0
    v = apply_constraints(v0, crack)
    energies = []
    for it in range(1, cfg.altmin_max + 1):
        u = picard_solve(mesh, v, dirichlet, p, cfg, u).u
        v_new = solve_v(mesh, u, v, crack, p, cfg)
        change = float(np.max(np.abs(v_new.values - v.values), initial=0.0))
        v = v_new
        energies.append(energy(u, v, mesh, p).total)
        if change < cfg.xi_vn:
            return AltMinResult(u, v, it, energies)
    msg = f"alternating minimisation hit altmin_max={cfg.altmin_max} (last change {change:.3e})"
    if not cfg.altmin_accept:
        raise AltMinCapError(msg, u, v, cfg.altmin_max, energies)
    log.warning(msg)
    return AltMinResult(u, v, cfg.altmin_max, energies, capped=True)
