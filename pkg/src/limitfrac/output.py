"""On-disk artifacts: legacy VTK snapshots, energy CSV and mesh dumps."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .mesh import Mesh

ENERGY_HEADER = "step,time,bulk,surface,total,dofs,elements,estimator"


def _g(x) -> str:
    return format(float(x), ".17g")


def write_vtk(mesh: Mesh, point_fields: dict, cell_fields: dict, path) -> Path:
    """Legacy ASCII unstructured grid with nodal and per-element scalars."""
    path = Path(path)
    lines = [
        "# vtk DataFile Version 3.0",
        "limitfrac snapshot",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_vertices} double",
    ]
    lines += [f"{_g(x)} {_g(y)} 0" for x, y in mesh.vertices]
    lines.append(f"CELLS {mesh.n_triangles} {4 * mesh.n_triangles}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {mesh.n_triangles}")
    lines += ["5"] * mesh.n_triangles
    for header, size, fields in (
        ("POINT_DATA", mesh.n_vertices, point_fields),
        ("CELL_DATA", mesh.n_triangles, cell_fields),
    ):
        if not fields:
            continue
        lines.append(f"{header} {size}")
        for name, values in fields.items():
            values = getattr(values, "values", values)
            values = np.asarray(values, dtype=float)
            if values.shape != (size,):
                raise ValueError(f"field {name!r} has {values.size} values, expected {size}")
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines += [_g(x) for x in values]
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def read_vtk(path) -> dict:
    """Minimal reader for files produced by :func:`write_vtk`."""
    tokens = Path(path).read_text(encoding="ascii").split("\n")
    out = {"points": None, "cells": None, "point_data": {}, "cell_data": {}}
    i = 0
    section = None
    while i < len(tokens):
        line = tokens[i].split()
        i += 1
        if not line:
            continue
        if line[0] == "POINTS":
            n = int(line[1])
            out["points"] = np.array([[float(x) for x in tokens[i + k].split()] for k in range(n)])
            i += n
        elif line[0] == "CELLS":
            n = int(line[1])
            out["cells"] = np.array([[int(x) for x in tokens[i + k].split()[1:]] for k in range(n)])
            i += n
        elif line[0] in ("POINT_DATA", "CELL_DATA"):
            section = ("point_data" if line[0] == "POINT_DATA" else "cell_data", int(line[1]))
        elif line[0] == "SCALARS":
            key, n = section
            out[key][line[1]] = np.array([float(tokens[i + 1 + k]) for k in range(n)])
            i += n + 1
    return out


def format_energy_row(row) -> str:
    return ",".join(str(int(x)) if isinstance(x, (int, np.integer)) else _g(x) for x in row)


def write_energy_csv(log, path) -> Path:
    if not log:
        raise ValueError("energy log is empty")
    path = Path(path)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(ENERGY_HEADER + "\n")
        for row in log:
            fh.write(format_energy_row(row) + "\n")
    return path


def write_mesh_dump(mesh: Mesh, path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(mesh.dump())
    return path
