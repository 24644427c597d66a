"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 solver failure (or a failed
``check``), 3 driver warning (a refinement or iteration cap was hit).
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .adapt import dorfler_mark
from .checks import run_checks
from .config import ConfigError, parse_config
from .estimator import assemble_indicators
from .fespace import ConstraintSet
from .mesh import bisect, conformity_violations
from .output import write_mesh_dump
from .sim import initial_state, run_quasi_static
from .solver import SolverError, alternate_minimize
from .state import dirichlet_constraints

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_WARNING = 0, 1, 2, 3


def _cmd_run(cfg, args) -> int:
    state = run_quasi_static(cfg)
    final = state.energy_log[-1]
    print(f"finished step {final.step} t={final.time:g}: total energy {final.total:.10g}, "
          f"{final.dofs} dofs, estimator {final.estimator:.4g}")
    print(f"outputs in {cfg.output_dir}")
    if state.warning:
        print(f"warning: {state.warning}", file=sys.stderr)
        return EXIT_WARNING
    return EXIT_OK


def _cmd_estimate(cfg, args) -> int:
    state = initial_state(cfg)
    t = cfg.load.dt if cfg.load.n_steps else 0.0
    d = dirichlet_constraints(state.mesh, t, cfg.load)
    res = alternate_minimize(state.mesh, state.u, state.v, d, ConstraintSet(), cfg.model, cfg.solver)
    ind = assemble_indicators(res.u, res.v, state.mesh, cfg.model)
    print("element,eta_u,eta_v,eta")
    for k, (a, b, c) in enumerate(zip(ind.eta_u, ind.eta_v, ind.eta)):
        print(f"{k},{a:.17g},{b:.17g},{c:.17g}")
    print(f"global estimator {ind.global_estimate:.17g}")
    return EXIT_WARNING if res.capped else EXIT_OK


def _cmd_refine_demo(cfg, args) -> int:
    rng = np.random.default_rng(cfg.seed)
    mesh = initial_state(cfg).mesh
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_mesh_dump(mesh, out / "mesh_000.txt")
    for k in range(1, args.rounds + 1):
        eta = rng.exponential(size=mesh.n_triangles)
        mesh = bisect(mesh, dorfler_mark(eta, cfg.adapt.theta))
        problems = conformity_violations(mesh)
        write_mesh_dump(mesh, out / f"mesh_{k:03d}.txt")
        print(f"round {k}: {mesh.n_triangles} elements, {mesh.n_vertices} vertices, "
              f"max shape ratio {mesh.shape_ratios().max():.6f}")
        if problems:
            print(f"conformity violated: {problems[0]}", file=sys.stderr)
            return EXIT_SOLVER
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="limitfrac", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="full quasi-static simulation")
    run.add_argument("config")
    est = sub.add_parser("estimate", help="one minimise + estimate pass at the first load step")
    est.add_argument("config")
    demo = sub.add_parser("refine-demo", help="random marking and bisection with mesh dumps")
    demo.add_argument("config")
    demo.add_argument("--rounds", type=int, default=10)
    chk = sub.add_parser("check", help="run the built-in invariant suite")
    chk.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "check":
        return EXIT_OK if run_checks(args.seed) else EXIT_SOLVER
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    command = {"run": _cmd_run, "estimate": _cmd_estimate, "refine-demo": _cmd_refine_demo}[args.command]
    try:
        return command(cfg, args)
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
