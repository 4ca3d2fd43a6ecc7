"""MEDIT ``.mesh`` (ASCII subset) reader/writer and a legacy VTK writer."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .mesh import Mesh, MeshError


class MeshFormatError(ValueError):
    """Malformed mesh file; the message names the offending line."""

    def __init__(self, path, line: int, msg: str):
        super().__init__(f"{path}:{line}: {msg}")
        self.line = line


_SECTIONS = ("MeshVersionFormatted", "Dimension", "Vertices", "Edges", "Triangles", "End")


def _tokens(path):
    """Yield ``(line_number, token)`` skipping comments (``#``) and blank lines."""
    with open(path, "r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0]
            for tok in line.split():
                yield lineno, tok


def read_mesh(path) -> Mesh:
    """Read a 2D MEDIT mesh. Indices in the file are 1-based."""
    toks = _tokens(path)
    vertices = refs = edges = edge_refs = tris = None
    dim = None
    last_line = 0

    def nxt(what):
        nonlocal last_line
        try:
            lineno, tok = next(toks)
        except StopIteration:
            raise MeshFormatError(path, last_line, f"unexpected end of file while reading {what}") from None
        last_line = lineno
        return lineno, tok

    def read_int(what):
        lineno, tok = nxt(what)
        try:
            return lineno, int(tok)
        except ValueError:
            raise MeshFormatError(path, lineno, f"expected integer for {what}, got {tok!r}") from None

    def read_float(what):
        lineno, tok = nxt(what)
        try:
            return float(tok)
        except ValueError:
            raise MeshFormatError(path, lineno, f"expected number for {what}, got {tok!r}") from None

    def read_index(what, n_max):
        lineno, v = read_int(what)
        if v < 1 or (n_max is not None and v > n_max):
            raise MeshFormatError(path, lineno, f"{what} index {v} out of range 1..{n_max}")
        return v - 1

    seen_end = False
    while True:
        try:
            lineno, tok = next(toks)
        except StopIteration:
            break
        last_line = lineno
        if tok == "MeshVersionFormatted":
            read_int("version")
        elif tok == "Dimension":
            ln, dim = read_int("dimension")
            if dim != 2:
                raise MeshFormatError(path, ln, f"only Dimension 2 is supported, got {dim}")
        elif tok == "Vertices":
            _, n = read_int("vertex count")
            vertices = np.empty((n, 2))
            refs = np.empty(n, dtype=np.int64)
            for i in range(n):
                vertices[i, 0] = read_float("x")
                vertices[i, 1] = read_float("y")
                refs[i] = read_int("vertex reference")[1]
        elif tok == "Edges":
            _, n = read_int("edge count")
            nv = None if vertices is None else len(vertices)
            edges = np.empty((n, 2), dtype=np.int64)
            edge_refs = np.empty(n, dtype=np.int64)
            for i in range(n):
                edges[i, 0] = read_index("edge vertex", nv)
                edges[i, 1] = read_index("edge vertex", nv)
                edge_refs[i] = read_int("edge reference")[1]
        elif tok == "Triangles":
            tri_line, n = read_int("triangle count")
            nv = None if vertices is None else len(vertices)
            tris = np.empty((n, 3), dtype=np.int64)
            for i in range(n):
                for k in range(3):
                    tris[i, k] = read_index("triangle vertex", nv)
                read_int("triangle reference")
        elif tok == "End":
            seen_end = True
            break
        else:
            raise MeshFormatError(path, lineno, f"unknown section header {tok!r}; expected one of {_SECTIONS}")

    if not seen_end:
        raise MeshFormatError(path, last_line, "missing End")
    if vertices is None or tris is None:
        raise MeshFormatError(path, last_line, "file needs both Vertices and Triangles sections")
    if dim is None:
        raise MeshFormatError(path, last_line, "missing Dimension")
    mesh = Mesh(vertices, tris, refs, edges, edge_refs)
    try:
        mesh.validate()
    except MeshError as exc:
        raise MeshFormatError(path, tri_line, f"invalid mesh: {exc}") from None
    return mesh


def write_mesh(mesh: Mesh, path) -> None:
    """Write a MEDIT mesh with full float precision (round trips exactly)."""
    lines = ["MeshVersionFormatted 2", "", "Dimension 2", "", "Vertices", str(mesh.n_vertices)]
    for (x, y), r in zip(mesh.vertices.tolist(), mesh.vertex_markers.tolist()):
        lines.append(f"{x!r} {y!r} {r}")
    lines += ["", "Edges", str(len(mesh.boundary_edges))]
    for (a, b), r in zip(mesh.boundary_edges.tolist(), mesh.edge_labels.tolist()):
        lines.append(f"{a + 1} {b + 1} {r}")
    lines += ["", "Triangles", str(mesh.n_triangles)]
    for a, b, c in mesh.triangles.tolist():
        lines.append(f"{a + 1} {b + 1} {c + 1} 0")
    lines += ["", "End", ""]
    Path(path).write_text("\n".join(lines))


def write_vtk(
    mesh: Mesh,
    path,
    point_data: Optional[Mapping[str, np.ndarray]] = None,
    cell_data: Optional[Mapping[str, np.ndarray]] = None,
    title: str = "stabmesh output",
) -> None:
    """Write a legacy ASCII VTK unstructured grid.

    Point arrays of shape ``(n,)`` become SCALARS, ``(n, 2)`` VECTORS and ``(n, 2, 2)``
    TENSORS (padded to 3D). Cell arrays must be scalar.
    """
    n, m = mesh.n_vertices, mesh.n_triangles
    out = [
        "# vtk DataFile Version 3.0",
        title.replace("\n", " ")[:255],
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {n} double",
    ]
    out += [f"{x!r} {y!r} 0.0" for x, y in mesh.vertices.tolist()]
    out.append(f"CELLS {m} {4 * m}")
    out += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles.tolist()]
    out.append(f"CELL_TYPES {m}")
    out += ["5"] * m
    if point_data:
        out.append(f"POINT_DATA {n}")
        for name, arr in point_data.items():
            arr = np.asarray(arr, dtype=float)
            if arr.shape[0] != n:
                raise ValueError(f"point field {name!r} has {arr.shape[0]} values, mesh has {n} vertices")
            key = name.replace(" ", "_")
            if arr.ndim == 1:
                out += [f"SCALARS {key} double 1", "LOOKUP_TABLE default"]
                out += [repr(v) for v in arr.tolist()]
            elif arr.shape[1:] == (2,):
                out.append(f"VECTORS {key} double")
                out += [f"{a!r} {b!r} 0.0" for a, b in arr.tolist()]
            elif arr.shape[1:] == (2, 2):
                out.append(f"TENSORS {key} double")
                for t in arr:
                    out += [f"{t[0, 0]!r} {t[0, 1]!r} 0.0", f"{t[1, 0]!r} {t[1, 1]!r} 0.0", "0.0 0.0 0.0"]
            else:
                raise ValueError(f"unsupported point field shape {arr.shape} for {name!r}")
    if cell_data:
        out.append(f"CELL_DATA {m}")
        for name, arr in cell_data.items():
            arr = np.asarray(arr, dtype=float).reshape(-1)
            if arr.shape[0] != m:
                raise ValueError(f"cell field {name!r} has {arr.shape[0]} values, mesh has {m} triangles")
            out += [f"SCALARS {name.replace(' ', '_')} double 1", "LOOKUP_TABLE default"]
            out += [repr(v) for v in arr.tolist()]
    out.append("")
    Path(path).write_text("\n".join(out))
