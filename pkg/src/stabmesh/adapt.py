"""Metric-driven remeshing by local operations.

Each pass splits long edges, collapses short ones, flips edges towards the Delaunay
triangulation in the local metric and smooths interior vertices. Lengths are measured
in the metric, so a "unit" mesh has all edges near 1. Boundary vertices only slide
along straight boundary segments and corners never move.

Metrics are carried as tuples ``(m11, m12, m22)``; the inner loops are plain Python.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .mesh import Mesh, MeshError, triangle_neighbours
from .metric import MetricField, metric_edge_length

log = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
FOUR_SQRT3 = 4.0 * math.sqrt(3.0)
AREA_TOL = 1e-14
MULTI_SPLIT_MAX = 8.0


@dataclass
class AdaptParams:
    l_low: float = 1.0 / SQRT2
    l_high: float = SQRT2
    max_passes: int = 10
    quality_floor: float = 0.2
    flip_sweeps: int = 8
    smooth_sweeps: int = 2
    max_vertices: int = 2_000_000

    def __post_init__(self):
        if not 0 < self.l_low < 1 < self.l_high:
            raise ValueError("need 0 < l_low < 1 < l_high")
        if not 0 < self.quality_floor <= 1:
            raise ValueError("quality_floor must lie in (0, 1]")
        if self.max_passes < 1:
            raise ValueError("max_passes must be at least 1")


@dataclass
class PassStats:
    pass_index: int
    n_vertices: int
    n_triangles: int
    splits: int
    collapses: int
    flips: int
    moves: int
    in_band: float
    min_quality: float
    median_quality: float


# ---------------------------------------------------------------------------
# 2x2 SPD algebra on tuples


def _fun_spd(m, fn, dfn):
    a, b, c = m
    mean = 0.5 * (a + c)
    d = math.sqrt(0.25 * (a - c) ** 2 + b * b)
    if d <= 1e-13 * abs(mean):
        f = fn(mean)
        return (f, 0.0, f) if dfn is None else (f, dfn(mean) * b, f)
    l1, l2 = mean + d, mean - d
    f1, f2 = fn(l1), fn(l2)
    beta = (f1 - f2) / (l1 - l2)
    alpha = f1 - beta * l1
    return (alpha + beta * a, beta * b, alpha + beta * c)


def spd_log(m):
    return _fun_spd(m, math.log, lambda x: 1.0 / x)


def spd_exp(s):
    return _fun_spd(s, math.exp, math.exp)


def _sq(m, ex, ey):
    return m[0] * ex * ex + 2.0 * m[1] * ex * ey + m[2] * ey * ey


def edge_length(ma, mb, ex, ey):
    la = math.sqrt(max(_sq(ma, ex, ey), 0.0))
    lb = math.sqrt(max(_sq(mb, ex, ey), 0.0))
    s = la + lb
    if s == 0.0:
        return 0.0
    return (2.0 / 3.0) * (la * la + la * lb + lb * lb) / s


def _tri_quality(p0, p1, p2, m0, m1, m2):
    a = (m0[0] + m1[0] + m2[0]) / 3.0
    b = (m0[1] + m1[1] + m2[1]) / 3.0
    c = (m0[2] + m1[2] + m2[2]) / 3.0
    m = (a, b, c)
    area = 0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0]))
    if area <= 0.0:
        return 0.0
    det = a * c - b * b
    if det <= 0.0:
        return 0.0
    s = (
        _sq(m, p1[0] - p0[0], p1[1] - p0[1])
        + _sq(m, p2[0] - p1[0], p2[1] - p1[1])
        + _sq(m, p0[0] - p2[0], p0[1] - p2[1])
    )
    return FOUR_SQRT3 * area * math.sqrt(det) / s


def quality_in_metric(geom_or_points, metrics) -> float:
    """Shape quality ``4 sqrt3 |K|_M / sum |e|_M^2`` in (0, 1]; 1 for metric-equilateral triangles.

    ``metrics`` is one SPD matrix per vertex (or a single matrix); the area and edge
    lengths use their arithmetic mean.
    """
    if hasattr(geom_or_points, "vertices"):
        pts = np.asarray(geom_or_points.vertices, dtype=float)
    else:
        pts = np.asarray(geom_or_points, dtype=float)
    M = np.asarray(metrics, dtype=float)
    if M.shape == (2, 2):
        M = np.broadcast_to(M, (3, 2, 2))
    ms = [(float(m[0, 0]), float(0.5 * (m[0, 1] + m[1, 0])), float(m[1, 1])) for m in M]
    p = [tuple(map(float, q)) for q in pts]
    return _tri_quality(p[0], p[1], p[2], ms[0], ms[1], ms[2])


# ---------------------------------------------------------------------------
# metric sources


class FunctionMetric:
    """Analytic metric ``fn(points (k, 2)) -> (k, 2, 2)``."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray]):
        self.fn = fn

    def at(self, x: float, y: float, hint: int = 0):
        m = np.asarray(self.fn(np.array([[x, y]])), dtype=float).reshape(2, 2)
        return (float(m[0, 0]), float(0.5 * (m[0, 1] + m[1, 0])), float(m[1, 1])), 0

    def initial(self, points: np.ndarray):
        M = np.asarray(self.fn(points), dtype=float)
        return [(float(m[0, 0]), float(0.5 * (m[0, 1] + m[1, 0])), float(m[1, 1])) for m in M]


class InterpolatedMetric:
    """Log-Euclidean P1 interpolation of a nodal metric on a fixed background mesh."""

    def __init__(self, mesh: Mesh, nodal: np.ndarray):
        self.pts = mesh.vertices.tolist()
        self.tris = mesh.triangles.tolist()
        self.nbr = triangle_neighbours(mesh.triangles).tolist()
        self.logs = [spd_log((float(m[0, 0]), float(0.5 * (m[0, 1] + m[1, 0])), float(m[1, 1]))) for m in nodal]
        self.nodal = [(float(m[0, 0]), float(0.5 * (m[0, 1] + m[1, 0])), float(m[1, 1])) for m in nodal]
        c = mesh.centroids()
        self._cent = c
        self._tree = None

    def _bary(self, t, x, y):
        a, b, c = self.tris[t]
        xa, ya = self.pts[a]
        xb, yb = self.pts[b]
        xc, yc = self.pts[c]
        d = (xb - xa) * (yc - ya) - (yb - ya) * (xc - xa)
        l0 = ((xb - x) * (yc - y) - (yb - y) * (xc - x)) / d
        l1 = ((xc - x) * (ya - y) - (yc - y) * (xa - x)) / d
        return l0, l1, 1.0 - l0 - l1

    def locate(self, x, y, hint=0):
        t = hint if 0 <= hint < len(self.tris) else 0
        for _ in range(4 * len(self.tris) + 8):
            lam = self._bary(t, x, y)
            k = min(range(3), key=lambda i: lam[i])
            if lam[k] >= -1e-12:
                return t, lam
            nb = self.nbr[t][k]
            if nb < 0:
                # outside across a boundary edge (a concave domain or round-off): scan
                break
            t = nb
        return self._scan(x, y)

    def _scan(self, x, y):
        if self._tree is None:
            from scipy.spatial import cKDTree

            self._tree = cKDTree(self._cent)
        k = min(len(self.tris), 32)
        _, cand = self._tree.query([x, y], k=k)
        best, best_lam, best_val = 0, None, -math.inf
        for t in np.atleast_1d(cand).tolist():
            lam = self._bary(t, x, y)
            if min(lam) > best_val:
                best, best_lam, best_val = t, lam, min(lam)
        if best_val < -1e-9:
            for t in range(len(self.tris)):
                lam = self._bary(t, x, y)
                if min(lam) > best_val:
                    best, best_lam, best_val = t, lam, min(lam)
        lam = [max(v, 0.0) for v in best_lam]
        s = sum(lam)
        return best, tuple(v / s for v in lam)

    def at(self, x: float, y: float, hint: int = 0):
        t, lam = self.locate(x, y, hint)
        a, b, c = self.tris[t]
        la, lb, lc = self.logs[a], self.logs[b], self.logs[c]
        s = tuple(lam[0] * la[i] + lam[1] * lb[i] + lam[2] * lc[i] for i in range(3))
        return spd_exp(s), t

    def initial(self, points: np.ndarray):
        return list(self.nodal)


MetricSource = Union[FunctionMetric, InterpolatedMetric]


# ---------------------------------------------------------------------------


def _orient(pa, pb, pc):
    return (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pb[1] - pa[1]) * (pc[0] - pa[0])


def _ekey(a, b):
    return (a, b) if a < b else (b, a)


class Remesher:
    """Mutable triangulation state for :func:`adapt`."""

    def __init__(self, mesh: Mesh, source: MetricSource, params: AdaptParams):
        self.params = params
        self.source = source
        self.pts: list[list[float]] = mesh.vertices.tolist()
        self.met: list[tuple] = source.initial(mesh.vertices)
        self.hint: list[int] = [0] * len(self.pts)
        if isinstance(source, InterpolatedMetric):
            vt = mesh.vertex_triangles()
            self.hint = [v[0] if v else 0 for v in vt]
        self.tris: list[Optional[list[int]]] = mesh.triangles.tolist()
        self.alive_v = [True] * len(self.pts)
        self.vt: list[set] = [set() for _ in self.pts]
        for k, t in enumerate(self.tris):
            for v in t:
                self.vt[v].add(k)
        self.bnd: dict[tuple[int, int], int] = {}
        for (a, b), lab in zip(mesh.boundary_edges.tolist(), mesh.edge_labels.tolist()):
            self.bnd[_ekey(a, b)] = lab
        self.vbnd: list[list] = [[] for _ in self.pts]
        for e in self.bnd:
            self.vbnd[e[0]].append(e)
            self.vbnd[e[1]].append(e)
        self.corner = [False] * len(self.pts)
        for v, es in enumerate(self.vbnd):
            if es:
                self.corner[v] = self._is_corner(v)
        self.area0 = mesh.total_area()
        self.stats: list[PassStats] = []
        self.flips_during_split = 0

    # -- basic queries -------------------------------------------------------

    def _is_corner(self, v):
        es = self.vbnd[v]
        if len(es) != 2:
            return True
        (a1, b1), (a2, b2) = es
        if self.bnd[es[0]] != self.bnd[es[1]]:
            return True
        u = a1 if b1 == v else b1
        w = a2 if b2 == v else b2
        pu, pv, pw = self.pts[u], self.pts[v], self.pts[w]
        cross = _orient(pu, pv, pw)
        l1 = math.hypot(pv[0] - pu[0], pv[1] - pu[1])
        l2 = math.hypot(pw[0] - pv[0], pw[1] - pv[1])
        return abs(cross) > 1e-12 * l1 * l2

    def is_boundary(self, v):
        return bool(self.vbnd[v])

    def edge_tris(self, a, b):
        return self.vt[a] & self.vt[b]

    def length(self, a, b):
        pa, pb = self.pts[a], self.pts[b]
        return edge_length(self.met[a], self.met[b], pb[0] - pa[0], pb[1] - pa[1])

    def quality(self, t):
        i, j, k = self.tris[t]
        return _tri_quality(self.pts[i], self.pts[j], self.pts[k], self.met[i], self.met[j], self.met[k])

    def edges(self):
        out = set()
        for t in self.tris:
            if t is None:
                continue
            a, b, c = t
            out.add(_ekey(a, b))
            out.add(_ekey(b, c))
            out.add(_ekey(c, a))
        return sorted(out)

    def neighbours(self, v):
        out = set()
        for t in self.vt[v]:
            out.update(self.tris[t])
        out.discard(v)
        return out

    def _add_tri(self, tri):
        k = len(self.tris)
        self.tris.append(list(tri))
        for v in tri:
            self.vt[v].add(k)
        return k

    def _kill_tri(self, k):
        for v in self.tris[k]:
            self.vt[v].discard(k)
        self.tris[k] = None

    def _add_vertex(self, x, y, hint):
        m, h = self.source.at(x, y, hint)
        self.pts.append([x, y])
        self.met.append(m)
        self.hint.append(h)
        self.alive_v.append(True)
        self.vt.append(set())
        self.vbnd.append([])
        self.corner.append(False)
        return len(self.pts) - 1

    def _set_bnd(self, a, b, lab):
        e = _ekey(a, b)
        self.bnd[e] = lab
        self.vbnd[a].append(e)
        self.vbnd[b].append(e)

    def _del_bnd(self, a, b):
        e = _ekey(a, b)
        lab = self.bnd.pop(e)
        self.vbnd[a].remove(e)
        self.vbnd[b].remove(e)
        return lab

    # -- split ---------------------------------------------------------------

    def split(self, a, b, pieces: int = 2):
        """Insert ``pieces - 1`` equally spaced vertices on edge ``(a, b)``; returns the first."""
        if pieces > 2:
            t = 1.0 / pieces
            # cut one piece at a time from the ``a`` end
            cur = a
            first = None
            for j in range(1, pieces):
                frac = t / (1.0 - (j - 1) * t)
                m = self._split_at(cur, b, frac)
                first = m if first is None else first
                cur = m
            return first
        return self._split_at(a, b, 0.5)

    def _split_at(self, a, b, frac):
        pa, pb = self.pts[a], self.pts[b]
        x = pa[0] + frac * (pb[0] - pa[0])
        y = pa[1] + frac * (pb[1] - pa[1])
        m = self._add_vertex(x, y, self.hint[a])
        for t in sorted(self.edge_tris(a, b)):
            tri = self.tris[t]
            i = tri.index(a)
            # rotate so the shared edge is tri[0] -> tri[1]
            if tri[(i + 1) % 3] == b:
                p, q, r = a, b, tri[(i + 2) % 3]
            else:
                p, q, r = b, a, tri[(i + 1) % 3]
            self._kill_tri(t)
            self._add_tri((p, m, r))
            self._add_tri((m, q, r))
        e = _ekey(a, b)
        if e in self.bnd:
            lab = self._del_bnd(a, b)
            self._set_bnd(a, m, lab)
            self._set_bnd(m, b, lab)
        return m

    def split_pass(self):
        lh = self.params.l_high
        total = 0
        for _ in range(64):
            cand = []
            for a, b in self.edges():
                L = self.length(a, b)
                if L > lh:
                    cand.append((-L, a, b))
            if not cand:
                break
            cand.sort()
            n = 0
            for _, a, b in cand:
                if not self.edge_tris(a, b):
                    continue
                L = self.length(a, b)
                if L > lh:
                    # moderate edges go straight to near-unit pieces; long ones are halved so
                    # the metric is resampled before the next cut
                    self.split(a, b, int(round(L)) if L <= MULTI_SPLIT_MAX else 2)
                    n += 1
                if len(self.pts) > self.params.max_vertices:
                    raise MeshError(f"remesher exceeded {self.params.max_vertices} vertices")
            total += n
            if n == 0:
                break
            # keep the triangulation Delaunay in the metric between sweeps so that
            # long spurious edges do not get split
            self.flips_during_split += self.flip_pass(sweeps=1)
        return total

    # -- collapse ------------------------------------------------------------

    def _can_remove(self, a, b):
        """Whether vertex ``a`` may be merged into ``b``."""
        if self.corner[a]:
            return False
        if self.is_boundary(a):
            if _ekey(a, b) not in self.bnd:
                return False
        shared = self.edge_tris(a, b)
        opp = set()
        for t in shared:
            opp.update(self.tris[t])
        opp.discard(a)
        opp.discard(b)
        if (self.neighbours(a) & self.neighbours(b)) != opp:
            return False
        # an interior edge joining two boundary vertices would pinch the domain
        if not self.is_boundary(a) and self.is_boundary(b) and len(shared) != 2:
            return False
        pb = self.pts[b]
        mb = self.met[b]
        old_q = min(self.quality(t) for t in self.vt[a])
        qmin = min(self.params.quality_floor, old_q)
        lh = self.params.l_high
        for t in self.vt[a] - shared:
            tri = [b if v == a else v for v in self.tris[t]]
            p = [self.pts[v] if v != b else pb for v in tri]
            ar = _orient(p[0], p[1], p[2])
            scale = max((p[1][0] - p[0][0]) ** 2 + (p[1][1] - p[0][1]) ** 2, (p[2][0] - p[0][0]) ** 2 + (p[2][1] - p[0][1]) ** 2)
            if ar <= 2.0 * AREA_TOL * scale:
                return False
            m = [self.met[v] for v in tri]
            if _tri_quality(p[0], p[1], p[2], m[0], m[1], m[2]) < qmin:
                return False
        for c in self.neighbours(a) - {b} - opp:
            pc = self.pts[c]
            if edge_length(mb, self.met[c], pc[0] - pb[0], pc[1] - pb[1]) > lh:
                return False
        return True

    def collapse(self, a, b):
        """Merge ``a`` into ``b``; ``a`` must pass :meth:`_can_remove`."""
        shared = self.edge_tris(a, b)
        for t in sorted(shared):
            self._kill_tri(t)
        if _ekey(a, b) in self.bnd:
            self._del_bnd(a, b)
            (e,) = list(self.vbnd[a])
            c = e[0] if e[1] == a else e[1]
            lab = self._del_bnd(a, c)
            self._set_bnd(b, c, lab)
        for t in sorted(self.vt[a]):
            tri = self.tris[t]
            tri[tri.index(a)] = b
            self.vt[b].add(t)
        self.vt[a] = set()
        self.alive_v[a] = False

    def collapse_pass(self):
        ll = self.params.l_low
        cand = []
        for a, b in self.edges():
            L = self.length(a, b)
            if L < ll:
                cand.append((L, a, b))
        cand.sort()
        n = 0
        for _, a, b in cand:
            if not (self.alive_v[a] and self.alive_v[b]) or not self.edge_tris(a, b):
                continue
            if self.length(a, b) >= ll:
                continue
            order = (a, b) if not self.is_boundary(a) or self.is_boundary(b) else (b, a)
            for u, v in (order, order[::-1]):
                if self._can_remove(u, v):
                    self.collapse(u, v)
                    n += 1
                    break
        return n

    # -- flip ----------------------------------------------------------------

    def _try_flip(self, a, b):
        if _ekey(a, b) in self.bnd:
            return False
        sh = sorted(self.edge_tris(a, b))
        if len(sh) != 2:
            return False
        t1, t2 = sh
        tri = self.tris[t1]
        i = tri.index(a)
        if tri[(i + 1) % 3] == b:
            c = tri[(i + 2) % 3]
            ta, tb = t1, t2
        else:
            a, b = b, a
            i = tri.index(a)
            c = tri[(i + 2) % 3]
        other = self.tris[t2]
        d = [v for v in other if v != a and v != b][0]
        if self.edge_tris(c, d):
            return False
        pa, pb, pc, pd = self.pts[a], self.pts[b], self.pts[c], self.pts[d]
        # convexity: both new triangles (a, d, c) and (b, c, d) must be positive
        s1 = _orient(pa, pd, pc)
        s2 = _orient(pb, pc, pd)
        scale = (pa[0] - pb[0]) ** 2 + (pa[1] - pb[1]) ** 2 + (pc[0] - pd[0]) ** 2 + (pc[1] - pd[1]) ** 2
        if s1 <= AREA_TOL * scale or s2 <= AREA_TOL * scale:
            return False
        ms = [self.met[v] for v in (a, b, c, d)]
        m11 = sum(m[0] for m in ms) / 4.0
        m12 = sum(m[1] for m in ms) / 4.0
        m22 = sum(m[2] for m in ms) / 4.0
        if not self._in_circle((m11, m12, m22), pa, pb, pc, pd):
            return False
        self._kill_tri(t1)
        self._kill_tri(t2)
        self._add_tri((a, d, c))
        self._add_tri((b, c, d))
        return True

    @staticmethod
    def _in_circle(m, pa, pb, pc, pd):
        """Whether ``pd`` is strictly inside the circumcircle of ``(pa, pb, pc)`` in the metric ``m``."""
        m11, m12, m22 = m
        # map x -> L^T x with M = L L^T (Cholesky)
        l11 = math.sqrt(m11)
        l21 = m12 / l11
        l22 = math.sqrt(max(m22 - l21 * l21, 1e-300))

        def tr(p):
            return (l11 * p[0] + l21 * p[1], l22 * p[1])

        A, B, C, D = tr(pa), tr(pb), tr(pc), tr(pd)
        adx, ady = A[0] - D[0], A[1] - D[1]
        bdx, bdy = B[0] - D[0], B[1] - D[1]
        cdx, cdy = C[0] - D[0], C[1] - D[1]
        ad = adx * adx + ady * ady
        bd = bdx * bdx + bdy * bdy
        cd = cdx * cdx + cdy * cdy
        det = adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx)
        scale = (ad + bd + cd) ** 2
        return det > 1e-10 * scale

    def flip_pass(self, sweeps: Optional[int] = None):
        total = 0
        for _ in range(self.params.flip_sweeps if sweeps is None else sweeps):
            n = 0
            for a, b in self.edges():
                if self.edge_tris(a, b) and self._try_flip(a, b):
                    n += 1
            total += n
            if n == 0:
                break
        return total

    # -- smoothing -----------------------------------------------------------

    def smooth_pass(self):
        moves = 0
        for _ in range(self.params.smooth_sweeps):
            for v in range(len(self.pts)):
                if not self.alive_v[v] or self.is_boundary(v) or not self.vt[v]:
                    continue
                if self._smooth_vertex(v):
                    moves += 1
        return moves

    def _smooth_vertex(self, v):
        p = self.pts[v]
        sw = sx = sy = 0.0
        hmin = math.inf
        for u in sorted(self.neighbours(v)):
            w = self.length(v, u)
            q = self.pts[u]
            sw += w
            sx += w * q[0]
            sy += w * q[1]
            hmin = min(hmin, math.hypot(q[0] - p[0], q[1] - p[1]))
        if sw == 0.0:
            return False
        nx = p[0] + 0.5 * (sx / sw - p[0])
        ny = p[1] + 0.5 * (sy / sw - p[1])
        if math.hypot(nx - p[0], ny - p[1]) <= 1e-3 * hmin:
            return False
        star = sorted(self.vt[v])
        old_q = min(self.quality(t) for t in star)
        new_m, new_h = self.source.at(nx, ny, self.hint[v])
        saved = (p[0], p[1], self.met[v], self.hint[v])
        self.pts[v] = [nx, ny]
        self.met[v] = new_m
        self.hint[v] = new_h
        ok = True
        for t in star:
            i, j, k = self.tris[t]
            pi_, pj, pk = self.pts[i], self.pts[j], self.pts[k]
            ar = _orient(pi_, pj, pk)
            scale = max((pj[0] - pi_[0]) ** 2 + (pj[1] - pi_[1]) ** 2, (pk[0] - pi_[0]) ** 2 + (pk[1] - pi_[1]) ** 2)
            if ar <= 2.0 * AREA_TOL * scale:
                ok = False
                break
        if ok and min(self.quality(t) for t in star) < old_q:
            ok = False
        if not ok:
            self.pts[v] = [saved[0], saved[1]]
            self.met[v] = saved[2]
            self.hint[v] = saved[3]
        return ok

    # -- driver ----------------------------------------------------------------

    def to_mesh(self) -> Mesh:
        live = [v for v in range(len(self.pts)) if self.alive_v[v] and self.vt[v]]
        remap = {v: i for i, v in enumerate(live)}
        verts = np.array([self.pts[v] for v in live], dtype=float)
        tris = np.array([[remap[v] for v in t] for t in self.tris if t is not None], dtype=np.int64)
        be = sorted(self.bnd.items())
        edges = np.array([[remap[a], remap[b]] for (a, b), _ in be], dtype=np.int64).reshape(-1, 2)
        labels = np.array([lab for _, lab in be], dtype=np.int64)
        return Mesh(verts, tris, None, edges, labels)

    def metric_array(self) -> np.ndarray:
        """Vertex metrics of :meth:`to_mesh` as ``(n, 2, 2)``."""
        live = [v for v in range(len(self.pts)) if self.alive_v[v] and self.vt[v]]
        return np.array([[[self.met[v][0], self.met[v][1]], [self.met[v][1], self.met[v][2]]] for v in live])

    def _record(self, k, splits, collapses, flips, moves):
        lengths = [self.length(a, b) for a, b in self.edges()]
        inband = float(np.mean([(self.params.l_low <= L <= self.params.l_high) for L in lengths])) if lengths else 0.0
        qs = [self.quality(t) for t in range(len(self.tris)) if self.tris[t] is not None]
        st = PassStats(
            k,
            sum(1 for v in range(len(self.pts)) if self.alive_v[v] and self.vt[v]),
            len(qs),
            splits,
            collapses,
            flips,
            moves,
            inband,
            float(min(qs)),
            float(np.median(qs)),
        )
        self.stats.append(st)
        log.info("adapt pass,%s", ",".join(str(x) for x in asdict(st).values()))
        return st

    def run(self) -> Mesh:
        for k in range(1, self.params.max_passes + 1):
            self.flips_during_split = 0
            s = self.split_pass()
            c = self.collapse_pass()
            f = self.flip_pass() + self.flips_during_split
            mv = self.smooth_pass()
            f += self.flip_pass() if mv else 0
            self._record(k, s, c, f, mv)
            mesh = self.to_mesh()
            try:
                mesh.validate()
            except MeshError as exc:
                raise MeshError(f"remesher produced an invalid mesh in pass {k}: {exc}") from None
            area = mesh.total_area()
            if abs(area - self.area0) > 1e-10 * self.area0:
                raise MeshError(f"domain area changed from {self.area0} to {area} in pass {k}")
            if s == 0 and c == 0:
                break
        return self.to_mesh()

    def stats_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f.name for f in PassStats.__dataclass_fields__.values()])
        for st in self.stats:
            w.writerow(list(asdict(st).values()))
        return buf.getvalue()


def _source(mesh: Mesh, metric, metric_fn) -> MetricSource:
    if metric_fn is not None:
        return FunctionMetric(metric_fn)
    nodal = metric.nodal if isinstance(metric, MetricField) else np.asarray(metric, dtype=float)
    if nodal.shape != (mesh.n_vertices, 2, 2):
        raise ValueError(f"metric has shape {nodal.shape}, expected ({mesh.n_vertices}, 2, 2)")
    return InterpolatedMetric(mesh, nodal)


def adapt(
    mesh: Mesh,
    metric: Union[MetricField, np.ndarray, None],
    params: Optional[AdaptParams] = None,
    metric_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> Mesh:
    """Remesh towards a unit mesh for ``metric``.

    Without ``metric_fn`` the nodal metric on ``mesh`` is interpolated (log-Euclidean,
    piecewise linear) wherever new vertices appear. With ``metric_fn`` the metric is
    evaluated analytically.
    """
    return Remesher(mesh, _source(mesh, metric, metric_fn), params or AdaptParams()).run()


# ---------------------------------------------------------------------------


@dataclass
class ConformityReport:
    lengths: np.ndarray
    histogram: np.ndarray
    bin_edges: np.ndarray
    in_band: float
    min_quality: float
    median_quality: float
    qualities: np.ndarray = field(repr=False, default=None)


def _nodal(mesh: Mesh, metric) -> np.ndarray:
    if isinstance(metric, MetricField):
        return metric.nodal
    if callable(metric):
        return np.asarray(metric(mesh.vertices), dtype=float)
    M = np.asarray(metric, dtype=float)
    if M.shape == (2, 2):
        return np.broadcast_to(M, (mesh.n_vertices, 2, 2))
    return M


def element_qualities(mesh: Mesh, metric) -> np.ndarray:
    M = _nodal(mesh, metric)
    Mbar = M[mesh.triangles].mean(axis=1)
    p = mesh.corners()
    e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
    s = np.einsum("mki,mij,mkj->m", e, Mbar, e)
    det = np.linalg.det(Mbar)
    return np.where(s > 0, FOUR_SQRT3 * mesh.signed_areas() * np.sqrt(np.maximum(det, 0)) / np.where(s > 0, s, 1), 0.0)


def conformity_stats(mesh: Mesh, metric, l_low: float = 1.0 / SQRT2, l_high: float = SQRT2, bins: int = 20) -> ConformityReport:
    """Metric edge-length histogram, in-band fraction and element quality summary."""
    M = _nodal(mesh, metric)
    E = mesh.edges()
    ev = mesh.vertices[E[:, 1]] - mesh.vertices[E[:, 0]]
    L = np.asarray(metric_edge_length(M[E[:, 0]], M[E[:, 1]], ev))
    hist, edges = np.histogram(L, bins=bins, range=(0.0, max(2.0, float(L.max()) if L.size else 2.0)))
    q = element_qualities(mesh, M)
    return ConformityReport(
        L,
        hist,
        edges,
        float(np.mean((L >= l_low) & (L <= l_high))) if L.size else 0.0,
        float(q.min()),
        float(np.median(q)),
        q,
    )


def implied_metrics(mesh: Mesh) -> np.ndarray:
    """The SPD matrix under which each triangle is equilateral with unit edges, ``(m, 2, 2)``.

    Solves ``e . M e = 1`` for the three edge vectors of every triangle.
    """
    p = mesh.corners()
    e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
    A = np.stack([e[..., 0] ** 2, 2.0 * e[..., 0] * e[..., 1], e[..., 1] ** 2], axis=-1)  # (m, 3, 3)
    a, b, c = np.linalg.solve(A, np.ones((mesh.n_triangles, 3, 1)))[..., 0].T
    return np.stack([np.stack([a, b], -1), np.stack([b, c], -1)], axis=-2)


def element_anisotropy(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Aspect ratio and long-axis angle in ``[0, pi)`` of every triangle, from its implied metric."""
    lam, V = np.linalg.eigh(implied_metrics(mesh))
    aspect = np.sqrt(lam[:, 1] / lam[:, 0])
    long_axis = V[:, :, 0]  # weakest eigenvalue, longest direction
    angle = np.mod(np.arctan2(long_axis[:, 1], long_axis[:, 0]), np.pi)
    return aspect, angle


def alignment_errors(mesh: Mesh, direction) -> np.ndarray:
    """Angle in degrees between each triangle's long axis and ``direction`` (sign-free)."""
    _, angle = element_anisotropy(mesh)
    d = np.asarray(direction, dtype=float)
    ref = np.arctan2(d[1], d[0])
    diff = np.mod(angle - ref, np.pi)
    return np.degrees(np.minimum(diff, np.pi - diff))
