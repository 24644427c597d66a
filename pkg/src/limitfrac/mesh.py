"""Conforming triangular meshes of the slit unit square.

Triangles are stored counter-clockwise with the refinement edge between
local vertices 0 and 1, so local vertex 2 is the newest vertex.  Bisection
of ``(a, b, c)`` through the midpoint ``m`` of ``ab`` yields the children
``(c, a, m)`` and ``(b, c, m)``; the two non-refinement edges of a parent
become the refinement edges of its children, which keeps the number of
similarity classes finite.

Slit faces are modelled geometrically: vertices on the slit line strictly
above the tip exist twice, once for each face, so the faces are boundary
edges of the two sides and never interact.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

_LOCAL_EDGES = np.array([[0, 1], [1, 2], [2, 0]])
_lineage_counter = itertools.count()


class GeometryError(ValueError):
    """Raised for invalid mesh geometry or slit descriptions."""


class EdgeClass(enum.IntEnum):
    INTERIOR = 0
    DIRICHLET = 1
    NEUMANN = 2
    CRACK = 3


@dataclass(frozen=True)
class Slit:
    """Vertical slit ``{x} x [tip, 1]`` entering from the top boundary."""

    x: float = 0.5
    depth: float = 0.5

    @property
    def tip(self) -> float:
        return 1.0 - self.depth


@dataclass(frozen=True)
class Geometry:
    area: np.ndarray  # (M,)
    h: np.ndarray  # (M,) longest edge
    grad_basis: np.ndarray  # (M, 3, 2) constant gradients of the hat functions
    edge_length: np.ndarray  # (E,)
    edge_normal: np.ndarray  # (E, 2) lower -> higher element, outward on boundary
    lumped_weight: np.ndarray  # (N,) sum of area/3 over adjacent elements

    def gradient(self, triangles: np.ndarray, values: np.ndarray) -> np.ndarray:
        """Elementwise constant gradient of the P1 function with nodal ``values``."""
        vt = values[triangles]
        # differences against vertex 0 make constants give an exact zero
        return np.einsum("mi,mik->mk", vt[:, 1:] - vt[:, :1], self.grad_basis[:, 1:])


class Mesh:
    """Immutable conforming triangulation with refinement genealogy.

    Parameters
    ----------
    vertices : (N, 2) array
    triangles : (M, 3) int array
        Counter-clockwise, refinement edge ``(t[0], t[1])``.  Use
        :func:`from_arrays` to orient arbitrary input.
    slit : Slit or None
    vertex_side : (N,) int array, optional
        -1 / +1 for the left / right copy of a slit vertex, 0 elsewhere.
    """

    def __init__(
        self,
        vertices,
        triangles,
        slit: Slit | None = None,
        vertex_side=None,
        *,
        generation: int = 0,
        vertex_parents=None,
        vertex_level=None,
        parent=None,
        lineage: int | None = None,
    ):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        n = len(self.vertices)
        self.slit = slit
        self.vertex_side = (
            np.zeros(n, dtype=np.int8) if vertex_side is None else np.asarray(vertex_side, dtype=np.int8)
        )
        self.generation = int(generation)
        if vertex_parents is None:
            vertex_parents = np.repeat(np.arange(n)[:, None], 2, axis=1)
        self.vertex_parents = np.asarray(vertex_parents, dtype=np.int64)
        self.vertex_level = np.zeros(n, dtype=np.int64) if vertex_level is None else np.asarray(vertex_level)
        self.parent = None if parent is None else np.asarray(parent, dtype=np.int64)
        self.lineage = next(_lineage_counter) if lineage is None else lineage
        for arr in (self.vertices, self.triangles, self.vertex_side, self.vertex_parents):
            arr.setflags(write=False)
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= n):
            raise GeometryError("triangle references a missing vertex")

    @classmethod
    def from_arrays(cls, vertices, triangles, slit: Slit | None = None, vertex_side=None) -> "Mesh":
        """Orient triangles counter-clockwise and put the longest edge first."""
        p = np.asarray(vertices, dtype=float)
        t = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        d1 = p[t[:, 1]] - p[t[:, 0]]
        d2 = p[t[:, 2]] - p[t[:, 0]]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        if np.any(det == 0.0):
            raise GeometryError("degenerate triangle")
        flip = det < 0
        t[flip] = t[flip][:, [0, 2, 1]]
        lengths = np.linalg.norm(p[t[:, _LOCAL_EDGES[:, 1]]] - p[t[:, _LOCAL_EDGES[:, 0]]], axis=2)
        k = np.argmax(lengths, axis=1)
        rot = (k[:, None] + np.arange(3)[None, :]) % 3
        t = np.take_along_axis(t, rot, axis=1)
        return cls(p, t, slit=slit, vertex_side=vertex_side)

    # ------------------------------------------------------------------
    # Sizes
    # ------------------------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def __repr__(self):
        return (
            f"Mesh(generation={self.generation}, vertices={self.n_vertices}, "
            f"triangles={self.n_triangles})"
        )

    # ------------------------------------------------------------------
    # Edge topology
    # ------------------------------------------------------------------
    @cached_property
    def _edge_data(self):
        n = self.n_vertices
        pairs = self.triangles[:, _LOCAL_EDGES]  # (M, 3, 2)
        lo = pairs.min(axis=2).ravel()
        hi = pairs.max(axis=2).ravel()
        keys = lo * n + hi
        uniq, inv = np.unique(keys, return_inverse=True)
        counts = np.bincount(inv, minlength=len(uniq))
        if counts.max(initial=0) > 2:
            raise GeometryError("non-manifold edge: more than two adjacent triangles")
        order = np.argsort(inv, kind="stable")
        first = np.zeros(len(uniq), dtype=np.int64)
        first[1:] = np.cumsum(counts)[:-1]
        edge_tris = np.full((len(uniq), 2), -1, dtype=np.int64)
        tri_of = order // 3
        edge_tris[:, 0] = tri_of[first]
        two = counts == 2
        edge_tris[two, 1] = tri_of[first[two] + 1]
        edges = np.stack([uniq // n, uniq % n], axis=1)
        return uniq, edges, inv.reshape(-1, 3), edge_tris

    @property
    def edge_keys(self) -> np.ndarray:
        return self._edge_data[0]

    @property
    def edges(self) -> np.ndarray:
        """(E, 2) vertex pairs, sorted."""
        return self._edge_data[1]

    @property
    def tri_edges(self) -> np.ndarray:
        """(M, 3) edge index of local edge k = (t[k], t[k+1])."""
        return self._edge_data[2]

    @property
    def edge_tris(self) -> np.ndarray:
        """(E, 2) adjacent triangles, lower index first; -1 marks a boundary edge."""
        return self._edge_data[3]

    @cached_property
    def edge_class(self) -> np.ndarray:
        p = self.vertices
        e = self.edges
        boundary = self.edge_tris[:, 1] < 0
        tags = np.full(len(e), EdgeClass.INTERIOR, dtype=np.int8)
        a, b = p[e[:, 0]], p[e[:, 1]]
        crack = np.zeros(len(e), dtype=bool)
        if self.slit is not None:
            crack = (
                boundary
                & (a[:, 0] == self.slit.x)
                & (b[:, 0] == self.slit.x)
                & (a[:, 1] >= self.slit.tip)
                & (b[:, 1] >= self.slit.tip)
            )
        top = p[:, 1].max() if len(p) else 0.0
        dirichlet = boundary & ~crack & (a[:, 1] == top) & (b[:, 1] == top)
        tags[boundary] = EdgeClass.NEUMANN
        tags[dirichlet] = EdgeClass.DIRICHLET
        tags[crack] = EdgeClass.CRACK
        return tags

    @cached_property
    def dirichlet_group(self) -> np.ndarray:
        """Per edge: -1 for the left top half, +1 for the right half, 0 otherwise."""
        group = np.zeros(self.n_edges, dtype=np.int8)
        d = self.edge_class == EdgeClass.DIRICHLET
        split = self.slit.x if self.slit is not None else 0.5
        mid = self.vertices[self.edges[d]].mean(axis=1)[:, 0]
        group[d] = np.where(mid < split, -1, 1)
        return group

    def boundary_vertices(self) -> np.ndarray:
        b = self.edge_tris[:, 1] < 0
        return np.unique(self.edges[b])

    # ------------------------------------------------------------------
    # Geometry
    # ------------------------------------------------------------------
    @cached_property
    def geometry(self) -> Geometry:
        return geometry_tables(self)

    def shape_ratios(self) -> np.ndarray:
        """h_tau / rho_tau with rho_tau the diameter of the inscribed circle."""
        p = self.vertices[self.triangles]
        lengths = np.linalg.norm(p[:, _LOCAL_EDGES[:, 1]] - p[:, _LOCAL_EDGES[:, 0]], axis=2)
        area = self.geometry.area
        inscribed_diameter = 4.0 * area / lengths.sum(axis=1)
        return lengths.max(axis=1) / inscribed_diameter

    def is_descendant_of(self, other: "Mesh") -> bool:
        n = other.n_vertices
        return (
            self.lineage == other.lineage
            and self.generation >= other.generation
            and self.n_vertices >= n
            and np.array_equal(self.vertices[:n], other.vertices)
        )

    def copy(self) -> "Mesh":
        return Mesh(
            self.vertices,
            self.triangles,
            self.slit,
            self.vertex_side,
            generation=self.generation,
            vertex_parents=self.vertex_parents,
            vertex_level=self.vertex_level,
            parent=self.parent,
            lineage=self.lineage,
        )

    def dump(self) -> str:
        """ASCII debug dump: vertices, triangles and edge tags."""
        lines = [f"generation {self.generation}", f"vertices {self.n_vertices}"]
        lines += [f"{i} {float(x)!r} {float(y)!r} {s}" for i, ((x, y), s) in enumerate(zip(self.vertices, self.vertex_side))]
        lines.append(f"triangles {self.n_triangles}")
        lines += [f"{i} {a} {b} {c}" for i, (a, b, c) in enumerate(self.triangles)]
        lines.append(f"edges {self.n_edges}")
        lines += [
            f"{i} {a} {b} {EdgeClass(tag).name}"
            for i, ((a, b), tag) in enumerate(zip(self.edges, self.edge_class))
        ]
        return "\n".join(lines) + "\n"


def geometry_tables(mesh: Mesh) -> Geometry:
    """Per-element areas, diameters and hat-function gradients; per-edge lengths and normals."""
    p = mesh.vertices
    t = mesh.triangles
    x0, x1, x2 = p[t[:, 0]], p[t[:, 1]], p[t[:, 2]]
    det = (x1[:, 0] - x0[:, 0]) * (x2[:, 1] - x0[:, 1]) - (x1[:, 1] - x0[:, 1]) * (x2[:, 0] - x0[:, 0])
    if np.any(det <= 0.0):
        raise GeometryError("degenerate or inverted triangle")
    area = 0.5 * det
    grads = np.empty((len(t), 3, 2))
    grads[:, 0, 0] = x1[:, 1] - x2[:, 1]
    grads[:, 0, 1] = x2[:, 0] - x1[:, 0]
    grads[:, 1, 0] = x2[:, 1] - x0[:, 1]
    grads[:, 1, 1] = x0[:, 0] - x2[:, 0]
    grads[:, 2, 0] = x0[:, 1] - x1[:, 1]
    grads[:, 2, 1] = x1[:, 0] - x0[:, 0]
    grads /= det[:, None, None]
    h = np.stack(
        [np.linalg.norm(x1 - x0, axis=1), np.linalg.norm(x2 - x1, axis=1), np.linalg.norm(x0 - x2, axis=1)],
        axis=1,
    ).max(axis=1)

    e = mesh.edges
    tangent = p[e[:, 1]] - p[e[:, 0]]
    length = np.linalg.norm(tangent, axis=1)
    normal = np.stack([tangent[:, 1], -tangent[:, 0]], axis=1) / length[:, None]
    owner = mesh.edge_tris[:, 0]
    third = t[owner].sum(axis=1) - e[:, 0] - e[:, 1]
    inward = np.einsum("ek,ek->e", p[third] - p[e[:, 0]], normal) > 0
    normal[inward] *= -1.0

    weight = np.bincount(t.ravel(), weights=np.repeat(area / 3.0, 3), minlength=mesh.n_vertices)
    return Geometry(area, h, grads, length, normal, weight)


def build_slit_square(n: int, slit: Slit | None = Slit()) -> Mesh:
    """Structured ``n x n`` mesh of the unit square, optionally with a slit.

    Each grid cell is split along its (0,0)-(1,1) diagonal.  Slit vertices
    strictly above the tip, including the mouth on the top boundary, are
    duplicated; triangles right of the slit use the copies.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise GeometryError(f"need at least one subdivision per side, got {n!r}")
    if slit is not None:
        if not 0.0 < slit.depth < 1.0:
            raise GeometryError(f"slit depth must lie in (0, 1), got {slit.depth}")
        for name, val in (("x", slit.x), ("tip", slit.tip)):
            k = val * n
            if abs(k - round(k)) > 1e-12:
                raise GeometryError(f"slit {name}={val} is not on a mesh line for n={n}")
        if not 0 < round(slit.x * n) < n:
            raise GeometryError("slit must lie strictly inside the square")
        slit = Slit(round(slit.x * n) / n, round(slit.depth * n) / n)

    xs = np.arange(n + 1) / n
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    vertices = np.stack([X.ravel(), Y.ravel()], axis=1)
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)  # idx[j, i] -> (x_i, y_j)
    sw = idx[:-1, :-1].ravel()
    se = idx[:-1, 1:].ravel()
    nw = idx[1:, :-1].ravel()
    ne = idx[1:, 1:].ravel()
    # hypotenuse sw-ne first, right-angle vertex last, counter-clockwise
    lower = np.stack([ne, sw, se], axis=1)
    upper = np.stack([sw, ne, nw], axis=1)
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)
    side = np.zeros(len(vertices), dtype=np.int8)

    if slit is not None:
        on_slit = np.flatnonzero((vertices[:, 0] == slit.x) & (vertices[:, 1] > slit.tip))
        copies = len(vertices) + np.arange(len(on_slit))
        remap = np.arange(len(vertices))
        remap[on_slit] = copies
        centroid_x = vertices[triangles].mean(axis=1)[:, 0]
        right = centroid_x > slit.x
        triangles[right] = remap[triangles[right]]
        vertices = np.vstack([vertices, vertices[on_slit]])
        side = np.concatenate([side, np.ones(len(on_slit), dtype=np.int8)])
        side[on_slit] = -1

    return Mesh(vertices, triangles, slit=slit, vertex_side=side)


def _bisect_rows(tris: np.ndarray, mids: np.ndarray):
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    return np.stack([c, a, mids], axis=1), np.stack([b, c, mids], axis=1)


def bisect(mesh: Mesh, marked) -> Mesh:
    """Newest-vertex bisection of the marked triangles plus conforming closure.

    Every marked triangle is split through its refinement edge; neighbours are
    bisected as often as needed to remove hanging nodes.  Children record the
    index of their parent in ``mesh`` via ``Mesh.parent``.
    """
    marked = np.unique(np.asarray(marked, dtype=np.int64).ravel())
    if marked.size == 0:
        return mesh.copy()
    if marked[0] < 0 or marked[-1] >= mesh.n_triangles:
        raise IndexError(f"marked element outside 0..{mesh.n_triangles - 1}")

    tri_edges = mesh.tri_edges
    edge_marked = np.zeros(mesh.n_edges, dtype=bool)
    edge_marked[tri_edges[marked, 0]] = True
    while True:
        touched = edge_marked[tri_edges].any(axis=1)
        missing = touched & ~edge_marked[tri_edges[:, 0]]
        if not missing.any():
            break
        edge_marked[tri_edges[missing, 0]] = True

    n = mesh.n_vertices
    split_edges = np.flatnonzero(edge_marked)
    ends = mesh.edges[split_edges]
    new_points = 0.5 * (mesh.vertices[ends[:, 0]] + mesh.vertices[ends[:, 1]])
    midpoint = np.full(mesh.n_edges, -1, dtype=np.int64)
    midpoint[split_edges] = n + np.arange(len(split_edges))

    new_side = np.zeros(len(split_edges), dtype=np.int8)
    if mesh.slit is not None:
        on_slit = (new_points[:, 0] == mesh.slit.x) & (new_points[:, 1] > mesh.slit.tip)
        s = mesh.vertex_side[ends[:, 0]].astype(int) + mesh.vertex_side[ends[:, 1]]
        new_side[on_slit] = np.sign(s[on_slit])

    keys = mesh.edge_keys
    tris = mesh.triangles.copy()
    parent = np.arange(mesh.n_triangles)
    while True:
        lo = tris[:, :2].min(axis=1)
        hi = tris[:, :2].max(axis=1)
        old = hi < n
        k = lo * n + hi
        pos = np.searchsorted(keys, k)
        pos = np.minimum(pos, len(keys) - 1)
        mid = np.where(old & (keys[pos] == k), midpoint[pos], -1)
        split = mid >= 0
        if not split.any():
            break
        c1, c2 = _bisect_rows(tris[split], mid[split])
        tris = np.concatenate([tris[~split], c1, c2])
        parent = np.concatenate([parent[~split], parent[split], parent[split]])

    # keep children of a parent adjacent and in parent order
    order = np.argsort(parent, kind="stable")
    tris, parent = tris[order], parent[order]

    return Mesh(
        np.vstack([mesh.vertices, new_points]),
        tris,
        mesh.slit,
        np.concatenate([mesh.vertex_side, new_side]),
        generation=mesh.generation + 1,
        vertex_parents=np.vstack([mesh.vertex_parents, ends]),
        vertex_level=np.concatenate([mesh.vertex_level, np.full(len(ends), mesh.generation + 1)]),
        parent=parent,
        lineage=mesh.lineage,
    )


def refine_uniform(mesh: Mesh, rounds: int = 1) -> Mesh:
    for _ in range(rounds):
        mesh = bisect(mesh, np.arange(mesh.n_triangles))
    return mesh


def conformity_violations(mesh: Mesh) -> list[str]:
    """Return human-readable conformity problems (empty when the mesh is valid).

    Checks manifold edges, positive orientation, that single-triangle edges
    lie on the outer boundary or on a slit face, and that the two slit faces
    never share an element or an edge.
    """
    problems = []
    try:
        edge_tris = mesh.edge_tris
    except GeometryError as exc:
        return [str(exc)]
    p = mesh.vertices
    t = mesh.triangles
    d1 = p[t[:, 1]] - p[t[:, 0]]
    d2 = p[t[:, 2]] - p[t[:, 0]]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    if np.any(det <= 0):
        problems.append(f"{int(np.sum(det <= 0))} non-positive triangles")

    lo, hi = p.min(axis=0), p.max(axis=0)
    e = mesh.edges[edge_tris[:, 1] < 0]
    a, b = p[e[:, 0]], p[e[:, 1]]
    on_outer = np.zeros(len(e), dtype=bool)
    for k in range(2):
        for bound in (lo[k], hi[k]):
            on_outer |= (a[:, k] == bound) & (b[:, k] == bound)
    on_slit = np.zeros(len(e), dtype=bool)
    if mesh.slit is not None:
        s = mesh.slit
        on_slit = (a[:, 0] == s.x) & (b[:, 0] == s.x) & (a[:, 1] >= s.tip) & (b[:, 1] >= s.tip)
    bad = ~(on_outer | on_slit)
    if bad.any():
        problems.append(f"{int(bad.sum())} boundary edges inside the domain (hanging nodes)")

    side = mesh.vertex_side[t]
    if np.any((side.min(axis=1) < 0) & (side.max(axis=1) > 0)):
        problems.append("a triangle touches both slit faces")
    if mesh.slit is not None:
        cx = p[t].mean(axis=1)[:, 0]
        wrong = ((side < 0).any(axis=1) & (cx > mesh.slit.x)) | ((side > 0).any(axis=1) & (cx < mesh.slit.x))
        if wrong.any():
            problems.append("slit-face vertex used on the wrong side")
    return problems
