"""Monitor functions, count normalization and the nodal metric field."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .mesh import ElementGeometry, Mesh

SQRT3 = np.sqrt(3.0)
UNIT_AREA = SQRT3 / 4.0  # area of the unit equilateral triangle
NSP_EPS_COEF = 9.0 * SQRT3 / 4.0


def _det_tr(H):
    H = np.asarray(H, dtype=float)
    det = H[..., 0, 0] * H[..., 1, 1] - H[..., 0, 1] * H[..., 1, 0]
    tr = H[..., 0, 0] + H[..., 1, 1]
    if np.any(det <= 0) or np.any(tr <= 0):
        raise ValueError("degenerate or indefinite H_K")
    return H, det, tr


def nsp_factor(area, H, b, eps):
    """Scalar factor of the NSP monitor: ``(|K| b.Hb / sqrt(det H) + 9 sqrt3/4 eps^2 tr^2 / det H)^(1/4)``."""
    H, det, tr = _det_tr(H)
    b = np.asarray(b, dtype=float)
    bhb = np.einsum("...i,...ij,...j->...", b, H, b)
    return (np.asarray(area) * bhb / np.sqrt(det) + NSP_EPS_COEF * eps**2 * tr**2 / det) ** 0.25


def monitor_nsp(geom: ElementGeometry, H_K, b, eps: float) -> np.ndarray:
    return nsp_factor(geom.area, H_K, b, eps) * np.asarray(H_K, dtype=float)


def monitors_nsp(area, H, b, eps) -> np.ndarray:
    """Vectorized NSP monitor over ``(m, 2, 2)`` Hessians."""
    return nsp_factor(area, H, b, eps)[..., None, None] * np.asarray(H, dtype=float)


def monitor_l2(H_K) -> np.ndarray:
    """``det(H)^(-1/6) H``; broadcasts over leading axes."""
    H, det, _ = _det_tr(H_K)
    return np.asarray(det)[..., None, None] ** (-1.0 / 6.0) * H


# ---------------------------------------------------------------------------
# SPD helpers


def spd_log(M: np.ndarray) -> np.ndarray:
    lam, V = np.linalg.eigh(M)
    return np.einsum("...ik,...k,...jk->...ij", V, np.log(lam), V)


def spd_exp(S: np.ndarray) -> np.ndarray:
    lam, V = np.linalg.eigh(S)
    return np.einsum("...ik,...k,...jk->...ij", V, np.exp(lam), V)


def clamp_eigenvalues(M: np.ndarray, lo: float, hi: float) -> np.ndarray:
    lam, V = np.linalg.eigh(M)
    lam = np.clip(lam, lo, hi)
    return np.einsum("...ik,...k,...jk->...ij", V, lam, V)


def log_euclidean_mean(Ms: np.ndarray, weights: Optional[np.ndarray] = None) -> np.ndarray:
    S = spd_log(Ms)
    w = np.ones(len(Ms)) if weights is None else np.asarray(weights, dtype=float)
    return spd_exp(np.einsum("k,kij->ij", w / w.sum(), S))


def metric_edge_length(M_a, M_b, e):
    """Metric length of an edge with a metric varying linearly in squared length.

    ``(2/3) (la^2 + la lb + lb^2) / (la + lb)`` with ``la = sqrt(e.M_a e)``; broadcasts.
    """
    e = np.asarray(e, dtype=float)
    la = np.sqrt(np.einsum("...i,...ij,...j->...", e, np.asarray(M_a, float), e))
    lb = np.sqrt(np.einsum("...i,...ij,...j->...", e, np.asarray(M_b, float), e))
    s = la + lb
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(s > 0, 2.0 / 3.0 * (la * la + la * lb + lb * lb) / np.where(s > 0, s, 1.0), 0.0)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------


@dataclass
class MetricField:
    """Nodal SPD metric plus the element metrics it was built from.

    ``element`` holds ``scaling * monitor`` per triangle before clamping and transfer.
    """

    nodal: np.ndarray
    target_count: int
    scaling: float
    element: Optional[np.ndarray] = None
    lam_min: float = 0.0
    lam_max: float = np.inf

    @classmethod
    def from_function(cls, mesh: Mesh, fn: Callable[[np.ndarray], np.ndarray]) -> "MetricField":
        """Metric sampled at the vertices from ``fn(points) -> (n, 2, 2)``; used for analytic tests."""
        M = np.asarray(fn(mesh.vertices), dtype=float)
        return cls(M, 0, 1.0, None)

    def expected_count(self, mesh: Mesh) -> float:
        """``sum_K |K| sqrt(det M_K) / |K_1|`` with element metrics (vertex means if none stored)."""
        M = self.element if self.element is not None else self.nodal[mesh.triangles].mean(axis=1)
        return float(np.sum(mesh.areas() * np.sqrt(np.linalg.det(M))) / UNIT_AREA)


def normalize(
    mesh: Mesh,
    monitors: np.ndarray,
    N: int,
    hmin: Optional[float] = None,
    hmax: Optional[float] = None,
) -> MetricField:
    """Scale element monitors so that the unit mesh has about ``N`` triangles, then move to vertices.

    ``theta = N |K_1| / sum_K |K| sqrt(det M_K)``. Vertex metrics are log-Euclidean means of
    the incident element metrics, clamped to eigenvalues in ``[hmax^-2, hmin^-2]``.
    """
    if N < 4:
        raise ValueError(f"target count must be at least 4, got {N}")
    monitors = np.asarray(monitors, dtype=float)
    if monitors.shape != (mesh.n_triangles, 2, 2):
        raise ValueError("one 2x2 monitor per triangle is required")
    mass = float(np.sum(mesh.areas() * np.sqrt(np.abs(np.linalg.det(monitors)))))
    if not mass > 0 or not np.isfinite(mass):
        raise ValueError("monitor has zero total mass")
    theta = N * UNIT_AREA / mass
    element = theta * monitors
    diam = mesh.diameter()
    hmin = 1e-6 * diam if hmin is None else hmin
    hmax = 0.5 * diam if hmax is None else hmax
    if not 0 < hmin <= hmax:
        raise ValueError("need 0 < hmin <= hmax")
    lo, hi = hmax**-2, hmin**-2
    logs = spd_log(clamp_eigenvalues(element, lo, hi))
    n = mesh.n_vertices
    acc = np.zeros((n, 4))
    idx = mesh.triangles.ravel()
    flat = np.repeat(logs.reshape(-1, 4), 3, axis=0)
    for c in range(4):
        acc[:, c] = np.bincount(idx, weights=flat[:, c], minlength=n)
    count = np.bincount(idx, minlength=n).astype(float)
    if np.any(count == 0):
        raise ValueError("metric undefined at a vertex without incident triangles")
    S = (acc / count[:, None]).reshape(n, 2, 2)
    S = 0.5 * (S + np.swapaxes(S, 1, 2))
    nodal = clamp_eigenvalues(spd_exp(S), lo, hi)
    return MetricField(nodal, int(N), theta, element, lo, hi)
