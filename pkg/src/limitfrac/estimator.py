"""Residual-type refinement indicators for the u- and v-equations.

For element ``tau`` with diameter ``h``, ``|T|^2 = ((1-kappa) v(c)^2 + kappa)
|grad u|^2`` taken at the centroid ``c`` and ``B = 1 + beta^alpha |T|^(2 alpha)``:

``eta_u^2 = h^4 |grad v|^4 int |(1-kappa) grad u / B^(1/a+1)|^2
          + h^2 int |2(kappa-1) v (grad v . grad u)(1 - alpha beta^alpha |T|^(2 alpha)) / B^(1/a+2)|^2
          + sum_e h_e int_e |((1-kappa) v^2 + kappa) [[grad u]] / B^(1/a+1)|^2``

over interior, Neumann and slit-face edges, and

``eta_v^2 = h^4 |grad v|^2 int |(1-kappa)|grad u|^2 / B^(1/a+1) + 2 delta|^2
          + h^2 int |(1-kappa)|grad u|^2 v / B^(1/a+1) + 2 delta v - 2 delta|^2
          + sum_e rho^2 h_e int_e [[grad v]]^2``

over all edges.  Shared edges count once for each neighbour.  Integrals of
the linear ``v`` are evaluated exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fespace import ScalarField
from .mesh import EdgeClass, Mesh
from .model import ModelParams, limiter_power
from .quadrature import gauss_interval


@dataclass(frozen=True, eq=False)
class IndicatorSet:
    mesh_generation: int
    eta_u: np.ndarray
    eta_v: np.ndarray

    @property
    def eta(self) -> np.ndarray:
        return np.sqrt(self.eta_u**2 + self.eta_v**2)

    @property
    def eta_sq(self) -> np.ndarray:
        return self.eta_u**2 + self.eta_v**2

    @property
    def global_u(self) -> float:
        return float(np.sqrt(np.sum(self.eta_u**2)))

    @property
    def global_v(self) -> float:
        return float(np.sqrt(np.sum(self.eta_v**2)))

    @property
    def global_estimate(self) -> float:
        return float(np.sqrt(np.sum(self.eta_sq)))


def _values(f, mesh):
    if isinstance(f, ScalarField):
        f.check(mesh)
        return f.values
    return np.asarray(f, dtype=float)


def jump(field, mesh: Mesh, edge: int | None = None):
    """Normal-gradient jump across each edge.

    Interior edges: ``(grad f|_hi - grad f|_lo) . n`` with ``n`` pointing
    from the lower- to the higher-indexed element.  Boundary and slit-face
    edges: the one-sided flux ``grad f . n`` with the outward normal.
    """
    values = _values(field, mesh)
    geo = mesh.geometry
    g = geo.gradient(mesh.triangles, values)
    lo, hi = mesh.edge_tris[:, 0], mesh.edge_tris[:, 1]
    flux_lo = np.einsum("ek,ek->e", g[lo], geo.edge_normal)
    interior = hi >= 0
    out = flux_lo.copy()
    out[interior] = np.einsum("ek,ek->e", g[hi[interior]], geo.edge_normal[interior]) - flux_lo[interior]
    return out if edge is None else float(out[edge])


def _linear_square_mean(vt: np.ndarray) -> np.ndarray:
    """Mean of the square of a linear function over a triangle from its vertex values."""
    return (np.sum(vt**2, axis=1) + vt[:, 0] * vt[:, 1] + vt[:, 1] * vt[:, 2] + vt[:, 2] * vt[:, 0]) / 6.0


def indicator_terms(u, v, mesh: Mesh, p: ModelParams) -> dict[str, np.ndarray]:
    """The six per-element terms (three per indicator), squared quantities."""
    uv, vv = _values(u, mesh), _values(v, mesh)
    geo = mesh.geometry
    t = mesh.triangles
    area, h = geo.area, geo.h
    gu = geo.gradient(t, uv)
    gv = geo.gradient(t, vv)
    gu2 = np.sum(gu**2, axis=1)
    gv2 = np.sum(gv**2, axis=1)
    vt = vv[t]
    vc = vt.mean(axis=1)
    s = ((1.0 - p.kappa) * vc**2 + p.kappa) * gu2
    d1 = limiter_power(s, p, 1.0 / p.alpha + 1.0)
    d2 = limiter_power(s, p, 1.0 / p.alpha + 2.0)
    with np.errstate(over="ignore", invalid="ignore"):
        ts = p.beta**p.alpha * s**p.alpha

    u1 = h**4 * gv2**2 * area * (1.0 - p.kappa) ** 2 * gu2 / d1**2
    coef = 2.0 * (p.kappa - 1.0) * np.sum(gv * gu, axis=1) * (1.0 - p.alpha * ts) / d2
    coef = np.where(np.isfinite(coef), coef, 0.0)
    u2 = h**2 * area * coef**2 * _linear_square_mean(vt)

    drive = (1.0 - p.kappa) * gu2 / d1
    v1 = h**4 * gv2 * area * (drive + 2.0 * p.delta) ** 2
    # (drive + 2 delta) v - 2 delta is linear in x
    v2 = h**2 * area * _linear_square_mean((drive + 2.0 * p.delta)[:, None] * vt - 2.0 * p.delta)

    ju = jump(uv, mesh)
    jv = jump(vv, mesh)
    he = geo.edge_length
    cls = mesh.edge_class
    u_edges = cls != EdgeClass.DIRICHLET

    # edge integral of ((1-kappa) v^2 + kappa)^2 with v linear along the edge
    xs, ws = gauss_interval(3)
    ends = vv[mesh.edges]
    ve = ends[:, 0, None] * (1.0 - xs) + ends[:, 1, None] * xs
    w2 = (((1.0 - p.kappa) * ve**2 + p.kappa) ** 2 * ws).sum(axis=1) * he  # (E,)

    u3 = np.zeros(mesh.n_triangles)
    v3 = np.zeros(mesh.n_triangles)
    for side in (0, 1):
        tri = mesh.edge_tris[:, side]
        has = tri >= 0
        e_u = has & u_edges
        np.add.at(u3, tri[e_u], he[e_u] * w2[e_u] * ju[e_u] ** 2 / d1[tri[e_u]] ** 2)
        np.add.at(v3, tri[has], p.rho**2 * he[has] ** 2 * jv[has] ** 2)

    return {"u1": u1, "u2": u2, "u3": u3, "v1": v1, "v2": v2, "v3": v3}


def indicator_u(u, v, mesh: Mesh, p: ModelParams) -> np.ndarray:
    terms = indicator_terms(u, v, mesh, p)
    return np.sqrt(terms["u1"] + terms["u2"] + terms["u3"])


def indicator_v(u, v, mesh: Mesh, p: ModelParams) -> np.ndarray:
    terms = indicator_terms(u, v, mesh, p)
    return np.sqrt(terms["v1"] + terms["v2"] + terms["v3"])


def assemble_indicators(u, v, mesh: Mesh, p: ModelParams) -> IndicatorSet:
    terms = indicator_terms(u, v, mesh, p)
    eta_u = np.sqrt(terms["u1"] + terms["u2"] + terms["u3"])
    eta_v = np.sqrt(terms["v1"] + terms["v2"] + terms["v3"])
    return IndicatorSet(mesh.generation, eta_u, eta_v)
