"""Triangular meshes, element geometry and directional element sizes.

Vertex indices are 0-based. Edge vectors of a triangle ``(x1, x2, x3)`` follow the
convention ``l1 = x2 - x1``, ``l2 = x1 - x3``, ``l3 = x3 - x2`` so that
``l1 + l2 + l3 = 0`` and ``B = [l1, -l2]`` maps the unit right triangle onto the
element with ``det(B) = 2 |K|``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

DEGENERACY_TOL = 1e-14
H_KINDS = ("LEP", "PLE", "DDC", "DEE")


class MeshError(ValueError):
    """Raised for invalid or degenerate meshes."""


@dataclass
class Mesh:
    """A conforming triangulation of a polygonal domain.

    Attributes
    ----------
    vertices : (n, 2) float array
    triangles : (m, 3) int array, counterclockwise
    vertex_markers : (n,) int array, 0 for interior vertices, boundary label otherwise
    boundary_edges : (k, 2) int array
    edge_labels : (k,) int array, one label per boundary edge
    """

    vertices: np.ndarray
    triangles: np.ndarray
    vertex_markers: np.ndarray = field(default=None)
    boundary_edges: np.ndarray = field(default=None)
    edge_labels: np.ndarray = field(default=None)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float).reshape(-1, 2)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.boundary_edges is None:
            self.boundary_edges, self.edge_labels = _topological_boundary(self.triangles)
        self.boundary_edges = np.asarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        if self.edge_labels is None:
            self.edge_labels = np.ones(len(self.boundary_edges), dtype=np.int64)
        self.edge_labels = np.asarray(self.edge_labels, dtype=np.int64).reshape(-1)
        if self.vertex_markers is None:
            markers = np.zeros(len(self.vertices), dtype=np.int64)
            for (a, b), lab in zip(self.boundary_edges, self.edge_labels):
                for v in (a, b):
                    if markers[v] == 0 or lab < markers[v]:
                        markers[v] = lab
            self.vertex_markers = markers
        self.vertex_markers = np.asarray(self.vertex_markers, dtype=np.int64).reshape(-1)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def copy(self) -> "Mesh":
        return Mesh(
            self.vertices.copy(),
            self.triangles.copy(),
            self.vertex_markers.copy(),
            self.boundary_edges.copy(),
            self.edge_labels.copy(),
        )

    def corners(self) -> np.ndarray:
        """Vertex coordinates per triangle, shape ``(m, 3, 2)``."""
        return self.vertices[self.triangles]

    def signed_areas(self) -> np.ndarray:
        p = self.corners()
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def areas(self) -> np.ndarray:
        return np.abs(self.signed_areas())

    def centroids(self) -> np.ndarray:
        return self.corners().mean(axis=1)

    def edge_vectors(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Edge vectors ``(l1, l2, l3)`` for every triangle, each of shape ``(m, 2)``."""
        p = self.corners()
        return p[:, 1] - p[:, 0], p[:, 0] - p[:, 2], p[:, 2] - p[:, 1]

    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted vertex pairs, lexicographically ordered."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def boundary_vertices(self) -> np.ndarray:
        return np.flatnonzero(self.vertex_markers > 0)

    def vertex_triangles(self) -> list[list[int]]:
        """Incident triangle ids per vertex, sorted by triangle index."""
        out: list[list[int]] = [[] for _ in range(self.n_vertices)]
        for k, tri in enumerate(self.triangles.tolist()):
            for v in tri:
                out[v].append(k)
        return out

    def diameter(self) -> float:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(np.hypot(*(hi - lo)))

    def total_area(self) -> float:
        return float(self.areas().sum())

    def validate(self) -> None:
        """Check index ranges, orientation, degeneracy and conformity."""
        n = self.n_vertices
        t = self.triangles
        if t.size and (t.min() < 0 or t.max() >= n):
            raise MeshError("triangle vertex index out of range")
        bad = np.flatnonzero((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2]))
        if bad.size:
            raise MeshError(f"triangle {bad[0]} repeats a vertex")
        sa = self.signed_areas()
        l1, l2, l3 = self.edge_vectors()
        diam2 = np.max([np.einsum("ij,ij->i", l, l) for l in (l1, l2, l3)], axis=0)
        degenerate = np.flatnonzero(np.abs(sa) <= DEGENERACY_TOL * diam2)
        if degenerate.size:
            raise MeshError(f"triangle {degenerate[0]} is degenerate")
        neg = np.flatnonzero(sa < 0)
        if neg.size:
            raise MeshError(f"triangle {neg[0]} is clockwise")
        directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        if len(np.unique(directed, axis=0)) != len(directed):
            raise MeshError("non-conforming mesh: a directed edge appears twice")
        bnd, _ = _topological_boundary(t)
        got = np.sort(self.boundary_edges, axis=1)
        want = np.sort(bnd, axis=1)
        if len(got) != len(want) or (
            len(got) and not np.array_equal(_lexsorted(got), _lexsorted(want))
        ):
            raise MeshError("boundary edges do not match the topological boundary")

    def oriented(self) -> "Mesh":
        """Return a copy with every triangle counterclockwise."""
        out = self.copy()
        neg = out.signed_areas() < 0
        out.triangles[neg] = out.triangles[neg][:, [0, 2, 1]]
        return out


def _lexsorted(e: np.ndarray) -> np.ndarray:
    return e[np.lexsort((e[:, 1], e[:, 0]))]


def _topological_boundary(triangles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    s = np.sort(e, axis=1)
    _, inv, counts = np.unique(s, axis=0, return_inverse=True, return_counts=True)
    inv = inv.reshape(-1)
    once = counts[inv] == 1
    bnd = e[once]
    bnd = _lexsorted(bnd) if len(bnd) else bnd.reshape(0, 2)
    return bnd, np.ones(len(bnd), dtype=np.int64)


# ---------------------------------------------------------------------------
# structured meshes


def square_side_label(p: np.ndarray, q: np.ndarray, lo=(0.0, 0.0), hi=(1.0, 1.0)) -> int:
    """Side label of a boundary edge of an axis-aligned box: 1 bottom, 2 right, 3 top, 4 left."""
    tol = 1e-12 * max(hi[0] - lo[0], hi[1] - lo[1])
    if abs(p[1] - lo[1]) < tol and abs(q[1] - lo[1]) < tol:
        return 1
    if abs(p[0] - hi[0]) < tol and abs(q[0] - hi[0]) < tol:
        return 2
    if abs(p[1] - hi[1]) < tol and abs(q[1] - hi[1]) < tol:
        return 3
    if abs(p[0] - lo[0]) < tol and abs(q[0] - lo[0]) < tol:
        return 4
    raise MeshError(f"edge {p}-{q} is not on the box boundary")


def from_triangles(
    vertices,
    triangles,
    label: Optional[Callable[[np.ndarray, np.ndarray], int]] = None,
) -> Mesh:
    """Build a mesh from raw arrays, orienting triangles and labelling boundary edges."""
    m = Mesh(np.asarray(vertices, float), np.asarray(triangles)).oriented()
    bnd, _ = _topological_boundary(m.triangles)
    if label is None:
        labels = np.ones(len(bnd), dtype=np.int64)
    else:
        labels = np.array([label(m.vertices[a], m.vertices[b]) for a, b in bnd], dtype=np.int64)
    return Mesh(m.vertices, m.triangles, None, bnd, labels)


def criss_cross_square(n: int, lo=(0.0, 0.0), hi=(1.0, 1.0)) -> Mesh:
    """Uniform criss-cross mesh: ``n x n`` cells, each split by both diagonals (4 n^2 triangles)."""
    if n < 1:
        raise ValueError("n must be positive")
    xs = np.linspace(lo[0], hi[0], n + 1)
    ys = np.linspace(lo[1], hi[1], n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    corner_pts = np.column_stack([X.ravel(), Y.ravel()])
    cx = 0.5 * (xs[:-1] + xs[1:])
    cy = 0.5 * (ys[:-1] + ys[1:])
    CX, CY = np.meshgrid(cx, cy, indexing="xy")
    centre_pts = np.column_stack([CX.ravel(), CY.ravel()])
    verts = np.vstack([corner_pts, centre_pts])
    nc = (n + 1) ** 2
    tris = []
    for j in range(n):
        for i in range(n):
            a = j * (n + 1) + i
            b = a + 1
            c = a + (n + 1) + 1
            d = a + (n + 1)
            m = nc + j * n + i
            tris += [(a, b, m), (b, c, m), (c, d, m), (d, a, m)]
    return from_triangles(verts, tris, label=lambda p, q: square_side_label(p, q, lo, hi))


def structured_square(nx: int, ny: Optional[int] = None, lo=(0.0, 0.0), hi=(1.0, 1.0)) -> Mesh:
    """Uniform mesh of ``nx x ny`` cells, each split along one diagonal."""
    ny = nx if ny is None else ny
    xs = np.linspace(lo[0], hi[0], nx + 1)
    ys = np.linspace(lo[1], hi[1], ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    tris = []
    for j in range(ny):
        for i in range(nx):
            a = j * (nx + 1) + i
            b, c, d = a + 1, a + nx + 2, a + nx + 1
            tris += [(a, b, c), (a, c, d)]
    return from_triangles(verts, tris, label=lambda p, q: square_side_label(p, q, lo, hi))


def equilateral_patch(nx: int, ny: int, edge: float = 1.0) -> Mesh:
    """Parallelogram tiled by equilateral triangles of the given edge length.

    Boundary sides are labelled 1 (bottom), 2 (right), 3 (top), 4 (left).
    """
    a = np.array([edge, 0.0])
    b = np.array([0.5 * edge, 0.5 * np.sqrt(3.0) * edge])
    verts = np.array([i * a + j * b for j in range(ny + 1) for i in range(nx + 1)])
    tris = []
    for j in range(ny):
        for i in range(nx):
            p = j * (nx + 1) + i
            tris += [(p, p + 1, p + nx + 1), (p + 1, p + nx + 2, p + nx + 1)]

    def label(p, q):
        # parallelogram coordinates (i, j) of both endpoints
        inv = np.linalg.inv(np.column_stack([a, b]))
        ip, iq = inv @ p, inv @ q
        tol = 1e-9
        if abs(ip[1]) < tol and abs(iq[1]) < tol:
            return 1
        if abs(ip[0] - nx) < tol and abs(iq[0] - nx) < tol:
            return 2
        if abs(ip[1] - ny) < tol and abs(iq[1] - ny) < tol:
            return 3
        return 4

    return from_triangles(verts, tris, label=label)


def refine_uniform(mesh: Mesh) -> Mesh:
    """Split every triangle into four by its edge midpoints."""
    edges = mesh.edges()
    n = mesh.n_vertices
    index = {(int(a), int(b)): n + k for k, (a, b) in enumerate(edges)}
    mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    verts = np.vstack([mesh.vertices, mids])

    def mid(a, b):
        return index[(a, b) if a < b else (b, a)]

    tris = []
    for a, b, c in mesh.triangles.tolist():
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        tris += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
    bnd, labels = [], []
    for (a, b), lab in zip(mesh.boundary_edges.tolist(), mesh.edge_labels.tolist()):
        m = mid(a, b)
        bnd += [(a, m), (m, b)]
        labels += [lab, lab]
    return Mesh(verts, np.array(tris), None, np.array(bnd), np.array(labels))


# ---------------------------------------------------------------------------
# element geometry


@dataclass(frozen=True)
class ElementGeometry:
    """Edge vectors and area of one triangle."""

    l1: np.ndarray
    l2: np.ndarray
    l3: np.ndarray
    area: float

    @property
    def B(self) -> np.ndarray:
        return np.column_stack([self.l1, -self.l2])

    @property
    def edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.l1, self.l2, self.l3

    @property
    def vertices(self) -> np.ndarray:
        """Vertex coordinates relative to the first vertex."""
        x1 = np.zeros(2)
        return np.array([x1, x1 + self.l1, x1 - self.l2])

    @classmethod
    def from_points(cls, x1, x2, x3, element: Optional[int] = None) -> "ElementGeometry":
        x1, x2, x3 = (np.asarray(p, dtype=float) for p in (x1, x2, x3))
        l1, l2, l3 = x2 - x1, x1 - x3, x3 - x2
        area = 0.5 * (l1[0] * (x3 - x1)[1] - l1[1] * (x3 - x1)[0])
        diam2 = max(float(l @ l) for l in (l1, l2, l3))
        if area <= DEGENERACY_TOL * diam2:
            where = "" if element is None else f" (element {element})"
            raise MeshError(f"degenerate or clockwise triangle{where}: signed area {area:.3e}")
        return cls(l1, l2, l3, float(area))


def element_geometry(mesh: Mesh, t: int) -> ElementGeometry:
    if not 0 <= t < mesh.n_triangles:
        raise IndexError(f"triangle index {t} out of range")
    x1, x2, x3 = mesh.vertices[mesh.triangles[t]]
    return ElementGeometry.from_points(x1, x2, x3, element=t)


def _unit(b) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    nb = np.linalg.norm(b, axis=-1, keepdims=True)
    if np.any(nb == 0):
        raise ValueError("direction undefined: zero convection vector")
    return b / nb


def directional_diameter(geom: ElementGeometry, b) -> float:
    """Length of the longest chord of the triangle parallel to ``b``.

    The longest chord passes through a vertex; for each vertex the chord through it
    is clipped against the opposite edge and the maximum is returned.
    """
    return float(directional_diameters(geom.vertices[None], np.asarray(b, float)[None])[0])


def directional_diameters(corners: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Vectorized :func:`directional_diameter` for ``(m, 3, 2)`` corners and ``(m, 2)`` directions."""
    corners = np.asarray(corners, dtype=float)
    u = _unit(np.broadcast_to(b, (len(corners), 2)))
    nrm = np.column_stack([-u[:, 1], u[:, 0]])
    s = np.einsum("mid,md->mi", corners, nrm)
    best = np.zeros(len(corners))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        sj, sk, si = s[:, j], s[:, k], s[:, i]
        lo = np.minimum(sj, sk)
        hi = np.maximum(sj, sk)
        inside = (si >= lo) & (si <= hi) & (hi > lo)
        denom = np.where(hi > lo, sk - sj, 1.0)
        t = np.clip((si - sj) / denom, 0.0, 1.0)
        x = corners[:, j] + t[:, None] * (corners[:, k] - corners[:, j])
        chord = np.linalg.norm(x - corners[:, i], axis=1)
        best = np.maximum(best, np.where(inside, chord, 0.0))
    return best


def h_variant(geom: ElementGeometry, b, kind: str) -> float:
    """Element size used by the classical stabilization strategies."""
    return float(h_variants(geom.vertices[None], np.asarray(b, float)[None], kind)[0])


def h_variants(corners: np.ndarray, b: np.ndarray, kind: str) -> np.ndarray:
    """Vectorized :func:`h_variant` over ``(m, 3, 2)`` corners."""
    kind = kind.upper()
    corners = np.asarray(corners, dtype=float)
    l1 = corners[:, 1] - corners[:, 0]
    l2 = corners[:, 0] - corners[:, 2]
    l3 = corners[:, 2] - corners[:, 1]
    L = np.stack([l1, l2, l3], axis=1)  # (m, 3, 2)
    lengths = np.linalg.norm(L, axis=2)
    if kind == "DEE":
        return lengths.max(axis=1)
    if kind == "DDC":
        return directional_diameters(corners, b)
    if kind not in H_KINDS:
        raise ValueError(f"unknown element size kind {kind!r}")
    u = _unit(np.broadcast_to(b, (len(corners), 2)))
    proj = np.abs(np.einsum("mkd,md->mk", L, u))
    if kind == "LEP":
        return proj.max(axis=1)
    longest = np.argmax(lengths, axis=1)
    return proj[np.arange(len(corners)), longest]


# ---------------------------------------------------------------------------
# point location


class PointLocator:
    """Locate points in a triangulation by a visibility walk with brute-force fallback."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self._pts = mesh.vertices
        self._tris = mesh.triangles
        self._nbr = triangle_neighbours(mesh.triangles)
        self._vt = mesh.vertex_triangles()
        c = mesh.corners()
        self._det = (c[:, 1, 0] - c[:, 0, 0]) * (c[:, 2, 1] - c[:, 0, 1]) - (
            c[:, 1, 1] - c[:, 0, 1]
        ) * (c[:, 2, 0] - c[:, 0, 0])

    def barycentric(self, t: int, p) -> np.ndarray:
        a, b, c = self._pts[self._tris[t]]
        d = self._det[t]
        l1 = ((b[0] - p[0]) * (c[1] - p[1]) - (b[1] - p[1]) * (c[0] - p[0])) / d
        l2 = ((c[0] - p[0]) * (a[1] - p[1]) - (c[1] - p[1]) * (a[0] - p[0])) / d
        return np.array([l1, l2, 1.0 - l1 - l2])

    def locate(self, p, start: Optional[int] = None, tol: float = 1e-12) -> tuple[int, np.ndarray]:
        """Return ``(triangle, barycentric)``; points outside snap to the closest triangle."""
        p = np.asarray(p, dtype=float)
        t = 0 if start is None else int(start)
        seen = set()
        for _ in range(4 * int(np.sqrt(len(self._tris))) + 64):
            lam = self.barycentric(t, p)
            if lam.min() >= -tol:
                return t, lam
            seen.add(t)
            order = np.argsort(lam)
            moved = False
            for k in order:
                if lam[k] >= -tol:
                    break
                nb = self._nbr[t, k]
                if nb >= 0 and nb not in seen:
                    t = int(nb)
                    moved = True
                    break
            if not moved:
                break
        return self._brute(p)

    def _brute(self, p) -> tuple[int, np.ndarray]:
        c = self.mesh.corners()
        d = self._det
        l1 = ((c[:, 1, 0] - p[0]) * (c[:, 2, 1] - p[1]) - (c[:, 1, 1] - p[1]) * (c[:, 2, 0] - p[0])) / d
        l2 = ((c[:, 2, 0] - p[0]) * (c[:, 0, 1] - p[1]) - (c[:, 2, 1] - p[1]) * (c[:, 0, 0] - p[0])) / d
        lam = np.column_stack([l1, l2, 1.0 - l1 - l2])
        t = int(np.argmax(lam.min(axis=1)))
        lt = np.clip(lam[t], 0.0, None)
        return t, lt / lt.sum()

    def locate_many(self, points: np.ndarray, hints: Optional[np.ndarray] = None):
        """Locate each point; ``hints`` are starting triangles (defaults to a triangle of the nearest vertex)."""
        points = np.asarray(points, dtype=float)
        if hints is None:
            from scipy.spatial import cKDTree

            _, near = cKDTree(self._pts).query(points)
            hints = np.array([self._vt[v][0] if self._vt[v] else 0 for v in near])
        tri = np.empty(len(points), dtype=np.int64)
        lam = np.empty((len(points), 3))
        for i, p in enumerate(points):
            tri[i], lam[i] = self.locate(p, hints[i])
        return tri, lam

    def interpolate(self, values: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Piecewise-linear interpolation of nodal ``values`` (any trailing shape) at ``points``."""
        tri, lam = self.locate_many(points)
        vals = np.asarray(values)[self._tris[tri]]  # (p, 3, ...)
        return np.einsum("pk,pk...->p...", lam, vals)


def triangle_neighbours(triangles: np.ndarray) -> np.ndarray:
    """``nbr[t, k]`` is the triangle across the edge opposite local vertex ``k`` (-1 on the boundary)."""
    t = np.asarray(triangles)
    m = len(t)
    nbr = -np.ones((m, 3), dtype=np.int64)
    owner: dict[tuple[int, int], tuple[int, int]] = {}
    for k, (a, b, c) in enumerate(t.tolist()):
        for loc, (p, q) in enumerate(((b, c), (c, a), (a, b))):
            key = (p, q) if p < q else (q, p)
            other = owner.pop(key, None)
            if other is None:
                owner[key] = (k, loc)
            else:
                nbr[k, loc] = other[0]
                nbr[other[0], other[1]] = k
    return nbr
