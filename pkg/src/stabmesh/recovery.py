"""Gradient and Hessian recovery from P1 nodal values.

Recovery is area-weighted patch averaging of element gradients, applied twice for
the Hessian. Element Hessians ``H_K`` are vertex means of the nodal matrices.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .mesh import Mesh, MeshError

SYMMETRY_TOL = 1e-10


def element_gradients(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    """Constant gradient of the P1 field on each triangle, shape ``(m, 2)`` or ``(m, 2, k)``."""
    u = np.asarray(u, dtype=float)
    if u.shape[0] != mesh.n_vertices:
        raise ValueError(f"field has {u.shape[0]} values, mesh has {mesh.n_vertices} vertices")
    p = mesh.corners()
    area2 = 2.0 * mesh.signed_areas()
    # grad(lambda_i) = rot90(x_{i+2} - x_{i+1}) / (2|K|)
    grads = np.empty((mesh.n_triangles, 3, 2))
    for i in range(3):
        e = p[:, (i + 2) % 3] - p[:, (i + 1) % 3]
        grads[:, i, 0] = -e[:, 1] / area2
        grads[:, i, 1] = e[:, 0] / area2
    vals = u[mesh.triangles]  # (m, 3, ...)
    return np.einsum("mid,mi...->md...", grads, vals)


def _patch_average(mesh: Mesh, per_elem: np.ndarray) -> np.ndarray:
    area = mesh.areas()
    n = mesh.n_vertices
    weight = np.bincount(mesh.triangles.ravel(), weights=np.repeat(area, 3), minlength=n)
    if np.any(weight == 0):
        raise MeshError(f"vertex {int(np.flatnonzero(weight == 0)[0])} has no incident triangle")
    flat = per_elem.reshape(len(per_elem), -1)
    out = np.empty((n, flat.shape[1]))
    idx = mesh.triangles.ravel()
    for c in range(flat.shape[1]):
        out[:, c] = np.bincount(idx, weights=np.repeat(area * flat[:, c], 3), minlength=n)
    out /= weight[:, None]
    return out.reshape((n,) + per_elem.shape[1:])


def recover_gradient(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    """Nodal gradients: area-weighted mean of the incident element gradients."""
    return _patch_average(mesh, element_gradients(mesh, u))


def _oriented_eigh(H: np.ndarray):
    """Eigenpairs with ``lam1 >= lam2``; rows of ``R`` are eigenvectors and ``H = R^T diag(lam) R``."""
    lam, V = np.linalg.eigh(H)
    lam = lam[..., ::-1]
    V = V[..., ::-1].copy()
    flip = np.linalg.det(V) < 0
    V[flip, :, 1] *= -1.0
    return lam, np.swapaxes(V, -1, -2)


@dataclass
class HessianField:
    """Recovered Hessians at vertices and their element projections.

    ``lam`` is ``(m, 2)`` with ``lam[:, 0] >= lam[:, 1]`` and ``R`` is ``(m, 2, 2)`` with
    ``element = R^T diag(lam) R``. Spectral data is filled by :meth:`regularized`.
    """

    nodal: np.ndarray
    element: np.ndarray
    lam: Optional[np.ndarray] = None
    R: Optional[np.ndarray] = None
    floor: Optional[float] = None

    def regularized(self, floor: Optional[float] = None) -> "HessianField":
        """SPD copy of the field with ``|lambda|`` floored; the default floor is ``1e-6 max(|lambda|max, 1)``."""
        if floor is None:
            floor = default_floor(self.nodal)
        nodal, _, _ = regularize(self.nodal, floor)
        element, lam, R = regularize(self.element, floor)
        return HessianField(nodal, element, lam, R, floor)


def default_floor(H: np.ndarray) -> float:
    lam = np.linalg.eigvalsh(0.5 * (H + np.swapaxes(H, -1, -2)))
    top = float(np.abs(lam).max()) if lam.size else 0.0
    return 1e-6 * max(top, 1.0)


def recover_hessian(mesh: Mesh, u: np.ndarray) -> HessianField:
    """Double gradient recovery, symmetrized, with vertex-mean element projections."""
    g = recover_gradient(mesh, u)  # (n, 2)
    J = recover_gradient(mesh, g)  # (n, 2, 2): J[:, i, j] = d_j g_i
    nodal = 0.5 * (J + np.swapaxes(J, 1, 2))
    element = nodal[mesh.triangles].mean(axis=1)
    return HessianField(nodal, element)


def regularize(H, floor: float):
    """Replace each eigenvalue by ``max(|lambda|, floor)``.

    Works on a single matrix or a stack ``(..., 2, 2)``. Returns ``(matrix, lam, R)``
    with ``lam[..., 0] >= lam[..., 1]`` and ``matrix = R^T diag(lam) R``.
    """
    if not floor > 0:
        raise ValueError(f"floor must be positive, got {floor}")
    H = np.asarray(H, dtype=float)
    asym = np.abs(H - np.swapaxes(H, -1, -2))
    scale = np.maximum(np.abs(H).max(axis=(-2, -1)), 1.0)
    if np.any(asym.max(axis=(-2, -1)) > SYMMETRY_TOL * scale):
        raise ValueError("matrix is not symmetric")
    shape = H.shape
    Hs = 0.5 * (H + np.swapaxes(H, -1, -2)).reshape(-1, 2, 2)
    lam, R = _oriented_eigh(Hs)
    lam = np.maximum(np.abs(lam), floor)
    # flooring |lambda| can reverse the order; swap rows of R and keep det R = +1
    swap = lam[:, 0] < lam[:, 1]
    if np.any(swap):
        lam[swap] = lam[swap][:, ::-1]
        Rs = R[swap][:, ::-1, :].copy()
        Rs[:, 1, :] *= -1.0
        R[swap] = Rs
    out = np.einsum("mki,mk,mkj->mij", R, lam, R)
    out = 0.5 * (out + np.swapaxes(out, 1, 2))
    return out.reshape(shape), lam.reshape(shape[:-1]), R.reshape(shape)
