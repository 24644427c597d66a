"""Doerfler marking and the three adaptive drivers for one time step."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .estimator import IndicatorSet, assemble_indicators
from .fespace import ConstraintSet, apply_constraints
from .mesh import bisect
from .model import ModelParams
from .solver import SolverConfig, alternate_minimize, picard_solve, solve_v
from .state import LoadSpec, RefineRecord, SimState, dirichlet_constraints

log = logging.getLogger(__name__)

SCHEDULES = ("geometric", "constant")


@dataclass(frozen=True)
class AdaptConfig:
    theta: float = 0.5
    xi_rf: float = 0.01
    max_refine_rounds: int = 10
    schedule: str = "geometric"
    schedule_ratio: float = 0.5
    h_min: float = 2.0**-6  # elements with diameter <= h_min are not marked

    def __post_init__(self):
        if not 0 < self.theta <= 1:
            raise ValueError(f"theta must lie in (0, 1], got {self.theta}")
        if not self.xi_rf > 0:
            raise ValueError(f"xi_rf must be positive, got {self.xi_rf}")
        if self.max_refine_rounds < 0:
            raise ValueError("max_refine_rounds must be non-negative")
        if not self.h_min >= 0:
            raise ValueError("h_min must be non-negative")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}")
        if self.schedule == "geometric" and not 0 < self.schedule_ratio < 1:
            raise ValueError("geometric schedule needs 0 < schedule_ratio < 1")

    def tolerance(self, k: int) -> float:
        """Refinement tolerance of outer step ``k`` (k = 0 gives ``xi_rf``)."""
        if self.schedule == "constant":
            return self.xi_rf
        return self.xi_rf * self.schedule_ratio**k


def dorfler_mark(indicators, theta: float) -> np.ndarray:
    """Smallest greedy set carrying a ``theta`` fraction of the squared indicators.

    Elements are taken by decreasing ``eta^2`` (ties: lower index first) until
    the running sum reaches ``theta * total``.  Returns sorted indices.
    """
    if not 0 < theta <= 1:
        raise ValueError(f"theta must lie in (0, 1], got {theta}")
    eta_sq = indicators.eta_sq if isinstance(indicators, IndicatorSet) else np.asarray(indicators, float) ** 2
    if eta_sq.size == 0:
        raise ValueError("no elements to mark")
    if not np.any(eta_sq > 0.0):
        return np.zeros(0, dtype=np.int64)
    order = np.argsort(-eta_sq, kind="stable")
    # exact stopping test: floats are dyadic, so scale them to integers
    ratios = [x.as_integer_ratio() for x in eta_sq[order].tolist()]
    denom = max(d for _, d in ratios)
    scaled = [n * (denom // d) for n, d in ratios]
    t_num, t_den = float(theta).as_integer_ratio()
    target = t_num * sum(scaled)
    acc = 0
    count = 0
    for value in scaled:
        if value == 0:
            break
        acc += value
        count += 1
        if acc * t_den >= target:
            break
    return np.sort(order[:count])


def _refine(state: SimState, ind: IndicatorSet, cfg: AdaptConfig) -> SimState | None:
    """Mark among elements coarser than ``h_min`` and bisect; None if none qualifies."""
    eligible = state.mesh.geometry.h > cfg.h_min
    eta_sq = np.where(eligible, ind.eta_sq, 0.0)
    if not eta_sq.any():
        return None
    marked = dorfler_mark(np.sqrt(eta_sq), cfg.theta)
    damaged = (state.v.values[state.mesh.triangles[marked]] < 0.9).any(axis=1)
    state.refinements.append(
        RefineRecord(state.step, state.mesh.n_triangles, len(marked), int(damaged.sum()), ind.global_estimate)
    )
    new = bisect(state.mesh, marked)
    log.debug("step %d: refined %d of %d elements", state.step, len(marked), state.mesh.n_triangles)
    return state.refined_to(new)


def _gate(state, ind, rounds, cfg):
    """Refine once if allowed; returns (state, refined, warning)."""
    if rounds >= cfg.max_refine_rounds:
        return state, False, f"refinement cap reached with estimator {ind.global_estimate:.3e}"
    new = _refine(state, ind, cfg)
    if new is None:
        return state, False, f"minimum mesh size reached with estimator {ind.global_estimate:.3e}"
    return new, True, None


def _constraints(state: SimState, load: LoadSpec):
    return (
        dirichlet_constraints(state.mesh, state.time, load),
        ConstraintSet(crack_nodes=state.cr_nodes),
    )


def algorithm_I_step(state: SimState, cfg: AdaptConfig, solver_cfg: SolverConfig,
                     p: ModelParams, load: LoadSpec) -> SimState:
    """Minimise to convergence, then estimate and refine until the estimator passes."""
    rounds = 0
    warning = None
    while True:
        dirichlet, crack = _constraints(state, load)
        res = alternate_minimize(state.mesh, state.u, state.v, dirichlet, crack, p, solver_cfg)
        state.altmin_energies.append((state.step, res.energies))
        if res.capped:
            warning = "alternating minimisation cap reached"
        state = replace(state, u=res.u, v=res.v)
        ind = assemble_indicators(state.u, state.v, state.mesh, p)
        estimate = ind.global_estimate
        log.info(
            "step %d round %d: elements %d dofs %d estimator %.4e alternations %d",
            state.step, rounds, state.mesh.n_triangles, state.mesh.n_vertices, estimate, res.iterations,
        )
        if estimate <= cfg.xi_rf:
            break
        state, refined, gate_warning = _gate(state, ind, rounds, cfg)
        if not refined:
            warning = f"{gate_warning} > {cfg.xi_rf:.3e}"
            break
        rounds += 1
    return replace(state, estimate=estimate, warning=warning)


def _interleaved(state: SimState, tol: float, use_stop_test: bool, cfg: AdaptConfig,
                 solver_cfg: SolverConfig, p: ModelParams, load: LoadSpec) -> SimState:
    gate = tol / math.sqrt(2.0)
    rounds = 0
    warning = None
    estimate = math.inf
    for it in range(1, solver_cfg.altmin_max + 1):
        refined = False
        dirichlet, crack = _constraints(state, load)
        v_old = apply_constraints(state.v, crack)
        u = picard_solve(state.mesh, v_old, dirichlet, p, solver_cfg, state.u).u
        state = replace(state, u=u, v=v_old)
        ind = assemble_indicators(state.u, state.v, state.mesh, p)
        if ind.global_estimate > gate:
            state, done, gate_warning = _gate(state, ind, rounds, cfg)
            rounds += done
            refined |= done
            warning = gate_warning or warning

        _, crack = _constraints(state, load)
        v_prev = state.v
        v_new = solve_v(state.mesh, state.u, v_prev, crack, p, solver_cfg)
        change = float(np.max(np.abs(v_new.values - v_prev.values), initial=0.0))
        state = replace(state, v=v_new)
        ind = assemble_indicators(state.u, state.v, state.mesh, p)
        estimate = ind.global_estimate
        if estimate > gate:
            state, done, gate_warning = _gate(state, ind, rounds, cfg)
            rounds += done
            refined |= done
            warning = gate_warning or warning
        log.debug("step %d iteration %d: change %.3e estimator %.3e", state.step, it, change, estimate)
        if use_stop_test and change < solver_cfg.xi_v and not refined:
            break
    else:
        if use_stop_test:
            warning = warning or "alternating minimisation cap reached"
    if refined:
        # the last gate refined the mesh: estimate the transferred state for the record
        estimate = assemble_indicators(state.u, state.v, state.mesh, p).global_estimate
    if warning is None and estimate > tol:
        warning = f"estimator {estimate:.3e} above tolerance {tol:.3e}"
    log.info(
        "step %d: elements %d dofs %d estimator %.4e iterations %d",
        state.step, state.mesh.n_triangles, state.mesh.n_vertices, estimate, it,
    )
    return replace(state, estimate=estimate, warning=warning)


def algorithm_II_step(state: SimState, cfg: AdaptConfig, solver_cfg: SolverConfig,
                      p: ModelParams, load: LoadSpec) -> SimState:
    """Refine after every u-solve and every v-solve, each gated at ``xi_rf / sqrt(2)``."""
    return _interleaved(state, cfg.xi_rf, True, cfg, solver_cfg, p, load)


def algorithm_III_step(state: SimState, cfg: AdaptConfig, solver_cfg: SolverConfig,
                       p: ModelParams, load: LoadSpec, k: int) -> SimState:
    """Algorithm II with tolerance ``cfg.tolerance(k)`` and no v-change stopping test.

    Runs exactly ``solver_cfg.altmin_max`` alternations.
    """
    return _interleaved(state, cfg.tolerance(k), False, cfg, solver_cfg, p, load)
