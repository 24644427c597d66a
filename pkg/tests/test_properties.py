"""Randomised invariants (hypothesis)."""

import math
from fractions import Fraction

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from limitfrac.adapt import dorfler_mark
from limitfrac.estimator import assemble_indicators
from limitfrac.fespace import ConstraintSet, ScalarField, apply_constraints, lumped_integral, transfer
from limitfrac.mesh import bisect, build_slit_square, conformity_violations
from limitfrac.model import ModelParams, energy
from limitfrac.quadrature import TRI_POINTS
from limitfrac.solver import SolverConfig, solve_v

FAST = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
MESH = build_slit_square(4)
N = MESH.n_vertices

unit = st.floats(0.0, 1.0, allow_nan=False)
finite = st.floats(-1e3, 1e3, allow_nan=False, allow_subnormal=False)
seeds = st.integers(0, 2**32 - 1)


@FAST
@given(arrays(float, st.integers(1, 60), elements=st.floats(0.0, 1e3)), st.sampled_from([0.1, 0.3, 0.5, 0.9, 1.0]))
def test_marking_is_greedy_minimal(eta, theta):
    marked = dorfler_mark(eta, theta)
    # the marker works on float squares; compare against their exact sum
    sq = [Fraction(x) for x in (eta**2).tolist()]
    total = sum(sq)
    if total == 0:
        assert marked.size == 0
        return
    chosen = sum(sq[i] for i in marked)
    assert chosen >= Fraction(theta) * total
    smallest = min(marked, key=lambda i: sq[i])
    assert chosen - sq[smallest] < Fraction(theta) * total
    # every unmarked element is no larger than every marked one
    rest = np.setdiff1d(np.arange(len(eta)), marked)
    if rest.size:
        assert max(sq[i] for i in rest) <= min(sq[i] for i in marked)


@FAST
@given(seeds, st.integers(1, 4))
def test_random_bisection_keeps_mesh_valid(seed, rounds):
    rng = np.random.default_rng(seed)
    mesh = build_slit_square(4)
    for _ in range(rounds):
        marked = rng.choice(mesh.n_triangles, rng.integers(1, mesh.n_triangles + 1), replace=False)
        child = bisect(mesh, marked)
        assert not conformity_violations(child)
        parent_area = np.bincount(child.parent, weights=child.geometry.area, minlength=mesh.n_triangles)
        np.testing.assert_allclose(parent_area, mesh.geometry.area, rtol=1e-14)
        assert child.n_triangles >= mesh.n_triangles + len(marked)
        mesh = child
    assert math.isclose(mesh.geometry.area.sum(), 1.0, rel_tol=1e-13)


@FAST
@given(seeds)
def test_transfer_keeps_range_and_constants(seed):
    rng = np.random.default_rng(seed)
    child = bisect(MESH, rng.choice(MESH.n_triangles, 6, replace=False))
    child = bisect(child, rng.choice(child.n_triangles, 6, replace=False))
    v = ScalarField.on(MESH, rng.uniform(size=N))
    w = transfer(v, MESH, child).values
    assert v.values.min() <= w.min() and w.max() <= v.values.max()
    c = rng.uniform()
    assert np.all(transfer(ScalarField.on(MESH, c), MESH, child).values == c)


@FAST
@given(finite, finite, finite)
def test_lumping_is_exact_for_linears(a, b, c):
    g = a + b * MESH.vertices[:, 0] + c * MESH.vertices[:, 1]
    exact = a + 0.5 * b + 0.5 * c
    assert math.isclose(lumped_integral(g, MESH), exact, rel_tol=1e-13, abs_tol=1e-12 * (abs(a) + abs(b) + abs(c)))


@FAST
@given(seeds)
def test_interpolated_square_dominates_square(seed):
    v = np.random.default_rng(seed).uniform(size=N)
    vt = v[MESH.triangles]
    at_points = vt @ TRI_POINTS.T  # v at quadrature points
    interp_of_square = (vt**2) @ TRI_POINTS.T
    assert np.all(interp_of_square >= at_points**2 - 1e-15)
    assert np.all(interp_of_square <= 1.0)


@FAST
@given(seeds, st.sampled_from([0.5, 1.0, 2.0]), st.sampled_from([0.5, 1.0, 3.0]), st.floats(1e-2, 1e4))
def test_bulk_energy_bounded_by_limit(seed, beta, alpha, scale):
    rng = np.random.default_rng(seed)
    p = ModelParams(alpha=alpha, beta=beta)
    e = energy(rng.normal(scale=scale, size=N), rng.uniform(size=N), MESH, p)
    assert 0.0 <= e.bulk <= 1.0 / (2.0 * beta)
    assert e.surface >= 0.0
    assert e.total == e.bulk + e.surface


@FAST
@given(seeds)
def test_indicators_nonnegative_and_consistent(seed):
    rng = np.random.default_rng(seed)
    ind = assemble_indicators(rng.normal(size=N), rng.uniform(size=N), MESH, ModelParams(beta=rng.uniform(0, 2)))
    assert np.all(ind.eta_u >= 0.0) and np.all(ind.eta_v >= 0.0)
    np.testing.assert_allclose(ind.eta**2, ind.eta_u**2 + ind.eta_v**2, rtol=1e-14)
    assert math.isclose(ind.global_estimate**2, math.fsum(ind.eta**2), rel_tol=1e-13)


@FAST
@given(seeds, st.integers(0, 5))
def test_solve_v_stays_in_unit_interval(seed, n_crack):
    rng = np.random.default_rng(seed)
    u = ScalarField.on(MESH, rng.normal(scale=rng.uniform(0.1, 10.0), size=N))
    v0 = ScalarField.on(MESH, rng.uniform(size=N))
    crack = ConstraintSet(crack_nodes=rng.choice(N, n_crack, replace=False))
    p = ModelParams(lambda_c=rng.uniform(0.001, 1.0), beta=rng.uniform(0.0, 2.0))
    v = solve_v(MESH, u, v0, crack, p, SolverConfig()).values
    assert v.min() >= 0.0 and v.max() <= 1.0
    assert np.all(v[crack.crack_nodes] == 0.0)
    assert np.all((v == 0.0) | (v > 1e-4))


@FAST
@given(arrays(float, N, elements=finite), st.lists(st.integers(0, N - 1), max_size=6, unique=True), unit)
def test_constraints_touch_only_listed_nodes(values, nodes, value):
    f = ScalarField.on(MESH, values)
    half = len(nodes) // 2
    cs = ConstraintSet(nodes[:half], np.full(half, value), nodes[half:])
    g = apply_constraints(f, cs).values
    assert np.all(g[nodes[:half]] == value)
    assert np.all(g[nodes[half:]] == 0.0)
    untouched = np.setdiff1d(np.arange(N), nodes)
    np.testing.assert_array_equal(g[untouched], values[untouched])


@FAST
@given(seeds)
def test_energy_increases_with_v(seed):
    rng = np.random.default_rng(seed)
    u = rng.normal(size=N)
    v = rng.uniform(0.0, 0.9, size=N)
    j = rng.integers(N)
    w = v.copy()
    w[j] += rng.uniform(0.0, 0.1)
    p = ModelParams(beta=rng.uniform(0.0, 2.0))
    assert energy(u, w, MESH, p).bulk >= energy(u, v, MESH, p).bulk
