"""Continuous piecewise-linear fields, lumped integration and constraints."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import Mesh


class BindingError(ValueError):
    """A field was used with a mesh it does not belong to."""


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Nodal coefficients of a P1 function on one mesh generation."""

    mesh_generation: int
    values: np.ndarray

    @classmethod
    def on(cls, mesh: Mesh, values) -> "ScalarField":
        values = np.array(values, dtype=float)
        if values.shape == ():
            values = np.full(mesh.n_vertices, float(values))
        field_ = cls(mesh.generation, values)
        field_.check(mesh)
        return field_

    def check(self, mesh: Mesh) -> None:
        if self.mesh_generation != mesh.generation or len(self.values) != mesh.n_vertices:
            raise BindingError(
                f"field bound to generation {self.mesh_generation} with {len(self.values)} values "
                f"used on generation {mesh.generation} with {mesh.n_vertices} vertices"
            )

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """Dirichlet prescriptions for u and crack pins (value 0) for v."""

    dirichlet_nodes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    dirichlet_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    crack_nodes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        nodes = np.asarray(self.dirichlet_nodes, dtype=np.int64)
        vals = np.broadcast_to(np.asarray(self.dirichlet_values, dtype=float), nodes.shape).copy()
        crack = np.unique(np.asarray(self.crack_nodes, dtype=np.int64))
        object.__setattr__(self, "dirichlet_nodes", nodes)
        object.__setattr__(self, "dirichlet_values", vals)
        object.__setattr__(self, "crack_nodes", crack)
        overlap = np.isin(nodes, crack)
        if np.any(vals[overlap] != 0.0):
            raise ValueError("node is both crack-pinned and Dirichlet with a nonzero value")

    @classmethod
    def from_dict(cls, dirichlet: dict[int, float] | None = None, crack=()) -> "ConstraintSet":
        dirichlet = dirichlet or {}
        return cls(
            np.fromiter(dirichlet.keys(), dtype=np.int64, count=len(dirichlet)),
            np.fromiter(dirichlet.values(), dtype=float, count=len(dirichlet)),
            np.asarray(list(crack), dtype=np.int64),
        )

    @property
    def fixed_nodes(self) -> np.ndarray:
        return np.union1d(self.dirichlet_nodes, self.crack_nodes)

    def free_nodes(self, n_vertices: int) -> np.ndarray:
        mask = np.ones(n_vertices, dtype=bool)
        mask[self.fixed_nodes] = False
        return np.flatnonzero(mask)


def interpolate(f, mesh: Mesh) -> ScalarField:
    """Nodal interpolant; ``f`` maps an (N, 2) coordinate array to N values."""
    values = np.asarray(f(mesh.vertices), dtype=float)
    return ScalarField.on(mesh, np.broadcast_to(values, (mesh.n_vertices,)))


def lumped_integral(nodal_values, mesh: Mesh) -> float:
    """Vertex-rule integral: the exact integral of the P1 interpolant of the data."""
    if isinstance(nodal_values, ScalarField):
        nodal_values.check(mesh)
        nodal_values = nodal_values.values
    nodal_values = np.asarray(nodal_values, dtype=float)
    if len(nodal_values) != mesh.n_vertices:
        raise BindingError("nodal data does not match the mesh")
    return float(np.sum(mesh.geometry.lumped_weight * nodal_values))


def prolong(values: np.ndarray, old: Mesh, new: Mesh, combine=None) -> np.ndarray:
    """Extend nodal data from ``old`` to the descendant ``new`` along vertex genealogy.

    Each new vertex is the midpoint of two older ones; by default it receives
    their average, which is exact linear interpolation of the old P1 function.
    """
    if not new.is_descendant_of(old):
        raise BindingError("target mesh is not a refinement descendant of the source mesh")
    values = np.asarray(values)
    out = np.empty(new.n_vertices, dtype=values.dtype)
    n = old.n_vertices
    out[:n] = values
    if new.n_vertices == n:
        return out
    levels = new.vertex_level[n:]
    parents = new.vertex_parents
    for level in np.unique(levels):
        idx = n + np.flatnonzero(levels == level)
        a, b = out[parents[idx, 0]], out[parents[idx, 1]]
        out[idx] = 0.5 * (a + b) if combine is None else combine(a, b)
    return out


def transfer(f: ScalarField, old: Mesh, new: Mesh) -> ScalarField:
    """Move a P1 field to a refined mesh by linear interpolation."""
    f.check(old)
    return ScalarField(new.generation, prolong(f.values, old, new))


def apply_constraints(f: ScalarField, cs: ConstraintSet) -> ScalarField:
    values = f.values.copy()
    values[cs.dirichlet_nodes] = cs.dirichlet_values
    values[cs.crack_nodes] = 0.0
    return ScalarField(f.mesh_generation, values)
