"""Time-step state, boundary loading and crack-set bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .fespace import ConstraintSet, ScalarField, prolong, transfer
from .mesh import EdgeClass, Mesh


@dataclass(frozen=True)
class LoadSpec:
    """Anti-plane displacement ``-c t`` on the left top half and ``+c t`` on the right."""

    c: float = 1.0
    dt: float = 0.01
    n_steps: int = 240
    split_x: float = 0.5

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_steps < 0:
            raise ValueError("n_steps must be non-negative")


def load_f(t: float, x, spec: LoadSpec, side: int = 0, top: float = 1.0):
    """Prescribed value at boundary point ``x``, or None where the boundary is free.

    ``side`` disambiguates the two copies of the slit mouth (-1 left, +1 right).
    """
    x1, x2 = float(x[0]), float(x[1])
    if x2 != top:
        return None
    if side < 0 or (side == 0 and x1 < spec.split_x):
        return 0.0 - spec.c * t  # no negative zero when c t == 0
    if side > 0 or x1 > spec.split_x:
        return spec.c * t
    return 0.0


def dirichlet_constraints(mesh: Mesh, t: float, spec: LoadSpec) -> ConstraintSet:
    """Dirichlet data on the vertices of all Dirichlet-tagged edges."""
    nodes = np.unique(mesh.edges[mesh.edge_class == EdgeClass.DIRICHLET])
    top = mesh.vertices[:, 1].max()
    values = np.array(
        [load_f(t, mesh.vertices[i], spec, int(mesh.vertex_side[i]), top) for i in nodes], dtype=float
    )
    return ConstraintSet(nodes, values)


def update_cr(v, mesh: Mesh, xi_cr: float) -> np.ndarray:
    """Endpoints of edges whose both endpoint values are at most ``xi_cr``."""
    values = v.values if isinstance(v, ScalarField) else np.asarray(v)
    low = values[mesh.edges] <= xi_cr
    return np.unique(mesh.edges[low.all(axis=1)])


def transfer_cr(cr_nodes: np.ndarray, old: Mesh, new: Mesh) -> np.ndarray:
    """A midpoint joins the crack set when both of its parents belong to it."""
    member = np.zeros(old.n_vertices, dtype=bool)
    member[cr_nodes] = True
    return np.flatnonzero(prolong(member, old, new, combine=np.logical_and))


class EnergyRow(NamedTuple):
    step: int
    time: float
    bulk: float
    surface: float
    total: float
    dofs: int
    elements: int
    estimator: float


class RefineRecord(NamedTuple):
    step: int
    n_elements: int
    n_marked: int
    n_marked_damaged: int  # marked elements meeting {v < 0.9}
    estimate: float


@dataclass
class SimState:
    step: int
    time: float
    mesh: Mesh
    u: ScalarField
    v: ScalarField
    cr_nodes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    energy_log: list = field(default_factory=list)
    warning: str | None = None
    estimate: float = 0.0
    refinements: list = field(default_factory=list)
    altmin_energies: list = field(default_factory=list)  # (step, [J_1, J_2, ...]) per alternating loop

    def refined_to(self, new: Mesh) -> "SimState":
        """Same state with fields and crack set moved to the refined mesh ``new``."""
        old = self.mesh
        return SimState(
            self.step,
            self.time,
            new,
            transfer(self.u, old, new),
            transfer(self.v, old, new),
            transfer_cr(self.cr_nodes, old, new),
            self.energy_log,
            self.warning,
            self.estimate,
            self.refinements,
            self.altmin_energies,
        )
