"""Quasi-static time loop with crack-set irreversibility and an energy ledger."""

from __future__ import annotations

import logging
from dataclasses import replace
from pathlib import Path

import numpy as np

from .adapt import algorithm_I_step, algorithm_II_step, algorithm_III_step
from .config import Config, format_config
from .estimator import assemble_indicators
from .fespace import ScalarField
from .mesh import Slit, build_slit_square
from .model import energy
from .output import write_energy_csv, write_vtk
from .state import EnergyRow, SimState, update_cr

log = logging.getLogger(__name__)


def initial_state(cfg: Config) -> SimState:
    """Undeformed intact body on the initial mesh, with the step-0 ledger row."""
    mesh = build_slit_square(cfg.mesh_n, Slit(0.5, cfg.slit_depth))
    state = SimState(0, 0.0, mesh, ScalarField.on(mesh, 0.0), ScalarField.on(mesh, 1.0))
    state.energy_log.append(_row(state, cfg))
    return state


def _row(state: SimState, cfg: Config) -> EnergyRow:
    e = energy(state.u, state.v, state.mesh, cfg.model)
    return EnergyRow(
        state.step, state.time, e.bulk, e.surface, e.total,
        state.mesh.n_vertices, state.mesh.n_triangles, float(state.estimate),
    )


def advance(state: SimState, cfg: Config) -> SimState:
    """One time step: drive, then grow and pin the crack set."""
    j = state.step + 1
    state = replace(state, step=j, time=j * cfg.load.dt, warning=None)
    if cfg.driver == "I":
        state = algorithm_I_step(state, cfg.adapt, cfg.solver, cfg.model, cfg.load)
    elif cfg.driver == "II":
        state = algorithm_II_step(state, cfg.adapt, cfg.solver, cfg.model, cfg.load)
    else:
        state = algorithm_III_step(state, cfg.adapt, cfg.solver, cfg.model, cfg.load, j - 1)
    cr = np.union1d(state.cr_nodes, update_cr(state.v, state.mesh, cfg.xi_cr)).astype(np.int64)
    v = state.v.values.copy()
    v[cr] = 0.0
    state = replace(state, cr_nodes=cr, v=ScalarField(state.mesh.generation, v))
    state.energy_log.append(_row(state, cfg))
    if state.warning:
        log.warning("step %d: %s", j, state.warning)
    return state


def write_snapshot(state: SimState, cfg: Config, directory: Path) -> Path:
    ind = assemble_indicators(state.u, state.v, state.mesh, cfg.model)
    return write_vtk(
        state.mesh,
        {"u": state.u, "v": state.v},
        {"eta": ind.eta, "eta_u": ind.eta_u, "eta_v": ind.eta_v},
        directory / f"step_{state.step:04d}.vtk",
    )


def run_quasi_static(cfg: Config, write: bool = True, callback=None) -> SimState:
    """Run all time steps of ``cfg``.

    ``callback(state)`` is called after every step.  With ``write`` the
    energy CSV, VTK snapshots and a run log go to ``cfg.output_dir``; the CSV
    is flushed even when a step fails.  ``state.warning`` ends up holding the
    last driver warning of the run, if any.
    """
    out = Path(cfg.output_dir)
    handler = None
    if write:
        out.mkdir(parents=True, exist_ok=True)
        handler = logging.FileHandler(out / "run.log", mode="w", encoding="utf-8")
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        logging.getLogger("limitfrac").addHandler(handler)
        logging.getLogger("limitfrac").setLevel(logging.INFO)
    try:
        for line in format_config(cfg):
            log.info("config %s", line)
        state = initial_state(cfg)
        if write and cfg.snapshot_every:
            write_snapshot(state, cfg, out)
        last_warning = None
        try:
            for _ in range(cfg.load.n_steps):
                state = advance(state, cfg)
                last_warning = state.warning or last_warning
                if callback is not None:
                    callback(state)
                if write and cfg.snapshot_every and (
                    state.step % cfg.snapshot_every == 0 or state.step == cfg.load.n_steps
                ):
                    write_snapshot(state, cfg, out)
        finally:
            if write:
                write_energy_csv(state.energy_log, out / "energy.csv")
        return replace(state, warning=last_warning)
    finally:
        if handler is not None:
            logging.getLogger("limitfrac").removeHandler(handler)
            handler.close()
