"""Built-in invariant suite behind ``limitfrac check``.

Each check is small and deterministic; the test suite covers the same
ground in more depth.
"""

from __future__ import annotations

import numpy as np

from .adapt import dorfler_mark
from .estimator import assemble_indicators
from .fespace import ConstraintSet, ScalarField
from .mesh import bisect, build_slit_square, conformity_violations
from .model import ModelParams, continuous_energy, directional_derivative, energy
from .solver import SolverConfig, alternate_minimize, solve_v
from .state import LoadSpec, dirichlet_constraints


def check_mesh(rng) -> str | None:
    mesh = build_slit_square(8)
    for _ in range(6):
        marked = rng.choice(mesh.n_triangles, size=max(1, mesh.n_triangles // 5), replace=False)
        child = bisect(mesh, marked)
        problems = conformity_violations(child)
        if problems:
            return problems[0]
        if not np.isclose(child.geometry.area.sum(), 1.0, rtol=0, atol=1e-13):
            return "areas do not sum to 1"
        mesh = child
    return None


def check_energy_values(rng) -> str | None:
    mesh = build_slit_square(2, None)
    x = mesh.vertices
    p0 = ModelParams(beta=1e-300, kappa=1e-300)
    e = energy(x[:, 0], np.ones(mesh.n_vertices), mesh, p0).total
    if not np.isclose(e, 0.5, rtol=1e-13):
        return f"linear field energy {e!r} != 0.5"
    e = energy(np.zeros(mesh.n_vertices), np.ones(mesh.n_vertices), mesh, ModelParams()).total
    if e != 0.0:
        return f"unloaded intact energy {e!r} != 0"
    return None


def check_strain_bound(rng) -> str | None:
    mesh = build_slit_square(4)
    for beta in (0.5, 1.0, 2.0):
        p = ModelParams(beta=beta)
        for _ in range(10):
            u = rng.normal(scale=100.0, size=mesh.n_vertices)
            v = rng.uniform(size=mesh.n_vertices)
            if energy(u, v, mesh, p).bulk > 1.0 / (2.0 * beta):
                return f"bulk energy above 1/(2 beta) for beta={beta}"
    return None


def check_gradient(rng) -> str | None:
    mesh = build_slit_square(4)
    p = ModelParams(lambda_c=0.5)
    n = mesh.n_vertices
    u, v, psi, phi = (rng.uniform(-1, 1, n) for _ in range(4))
    v = np.abs(v)
    exact = directional_derivative(u, v, psi, phi, mesh, p)
    h = 1e-5
    fd = (continuous_energy(u + h * psi, v + h * phi, mesh, p)
          - continuous_energy(u - h * psi, v - h * phi, mesh, p)) / (2 * h)
    if abs(fd - exact) > 1e-6 * max(1.0, abs(exact)):
        return f"directional derivative {exact!r} vs difference quotient {fd!r}"
    return None


def check_marking(rng) -> str | None:
    for _ in range(200):
        eta = rng.exponential(size=rng.integers(1, 50))
        theta = rng.choice([0.1, 0.5, 1.0])
        marked = dorfler_mark(eta, theta)
        sq = eta**2
        if sq[marked].sum() < theta * sq.sum() * (1 - 1e-12):
            return "marked set misses the theta fraction"
        if len(marked) > 1:
            smaller = np.delete(marked, np.argmin(sq[marked]))
            if sq[smaller].sum() >= theta * sq.sum():
                return "marked set is not minimal"
    return None


def check_fixed_point(rng) -> str | None:
    mesh = build_slit_square(8)
    p, cfg = ModelParams(), SolverConfig()
    u, v = ScalarField.on(mesh, 0.0), ScalarField.on(mesh, 1.0)
    d = dirichlet_constraints(mesh, 0.0, LoadSpec())
    res = alternate_minimize(mesh, u, v, d, ConstraintSet(), p, cfg)
    if res.iterations != 1 or np.any(res.u.values != 0.0) or np.any(res.v.values != 1.0):
        return "unloaded state is not a fixed point"
    if assemble_indicators(res.u, res.v, mesh, p).global_estimate != 0.0:
        return "unloaded state has a nonzero estimator"
    return None


def check_v_range(rng) -> str | None:
    mesh = build_slit_square(8)
    p, cfg = ModelParams(lambda_c=0.01), SolverConfig()
    for _ in range(5):
        u = ScalarField.on(mesh, rng.normal(scale=2.0, size=mesh.n_vertices))
        v = ScalarField.on(mesh, rng.uniform(size=mesh.n_vertices))
        crack = ConstraintSet(crack_nodes=rng.choice(mesh.n_vertices, 3, replace=False))
        out = solve_v(mesh, u, v, crack, p, cfg).values
        if out.min() < 0.0 or out.max() > 1.0 or np.any(out[crack.crack_nodes] != 0.0):
            return "phase field left [0, 1] or crack pins moved"
    return None


CHECKS = {
    "mesh conformity under random bisection": check_mesh,
    "energy reference values": check_energy_values,
    "strain-limiting energy bound": check_strain_bound,
    "directional derivative vs difference quotient": check_gradient,
    "Doerfler marking minimality": check_marking,
    "unloaded fixed point": check_fixed_point,
    "phase-field range and pins": check_v_range,
}


def run_checks(seed: int = 0, out=print) -> bool:
    ok = True
    for name, fn in CHECKS.items():
        problem = fn(np.random.default_rng(seed))
        ok &= problem is None
        out(f"{'PASS' if problem is None else 'FAIL'} {name}" + ("" if problem is None else f": {problem}"))
    return ok
