"""P1 assembly of the streamline-stabilized convection-diffusion form.

For piecewise-linear elements the element Laplacians vanish, so GLS and SUPG coincide:

    a(u, v) = (eps grad u, grad v) + (b . grad u, v) + sum_K alpha_K (b . grad u, b . grad v)_K
    l(v)    = (f, v) + sum_K alpha_K (f, b . grad v)_K

Dirichlet data is imposed strongly by replacing boundary rows with identity rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import Mesh
from .quadrature import DEG5, get_rule
from .stabilization import ConvectionField, StabParams, element_convection

ScalarFn = Callable[[np.ndarray, np.ndarray], np.ndarray]
RESIDUAL_TOL = 1e-10


class SolverError(RuntimeError):
    pass


@dataclass
class Problem:
    """``-eps Lap u + b . grad u = f`` in the domain, ``u = g`` on the boundary."""

    eps: float
    b: ConvectionField
    f: ScalarFn
    g: ScalarFn
    exact: Optional[ScalarFn] = None
    exact_grad: Optional[Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]] = None

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"diffusivity must be positive, got {self.eps}")

    def convection_at(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """``b`` at points, shape ``x.shape + (2,)``."""
        if callable(self.b):
            bx, by = self.b(x, y)
            return np.stack(np.broadcast_arrays(bx, by), axis=-1).astype(float)
        return np.broadcast_to(np.asarray(self.b, dtype=float), np.shape(x) + (2,))

    def divergence_check(self, mesh: Mesh, h: float = 1e-6) -> float:
        """Max central-difference divergence of ``b`` at the element centroids."""
        if not callable(self.b):
            return 0.0
        c = mesh.centroids()
        x, y = c[:, 0], c[:, 1]
        dbx = (self.convection_at(x + h, y)[:, 0] - self.convection_at(x - h, y)[:, 0]) / (2 * h)
        dby = (self.convection_at(x, y + h)[:, 1] - self.convection_at(x, y - h)[:, 1]) / (2 * h)
        return float(np.abs(dbx + dby).max())


@dataclass
class LinearSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    dirichlet: np.ndarray  # boundary vertex ids; dof i is vertex i


def shape_gradients(mesh: Mesh) -> np.ndarray:
    """Gradients of the three barycentric functions on every triangle, ``(m, 3, 2)``."""
    p = mesh.corners()
    area2 = 2.0 * mesh.signed_areas()
    G = np.empty((mesh.n_triangles, 3, 2))
    for i in range(3):
        e = p[:, (i + 2) % 3] - p[:, (i + 1) % 3]
        G[:, i, 0] = -e[:, 1] / area2
        G[:, i, 1] = e[:, 0] / area2
    return G


def _eval(fn: ScalarFn, pts: np.ndarray) -> np.ndarray:
    return np.broadcast_to(np.asarray(fn(pts[..., 0], pts[..., 1]), dtype=float), pts.shape[:-1])


def element_matrices(mesh: Mesh, problem: Problem, params: StabParams) -> tuple[np.ndarray, np.ndarray]:
    """Element matrices ``(m, 3, 3)`` and load vectors ``(m, 3)``."""
    m = mesh.n_triangles
    if len(params.alpha) != m:
        raise ValueError(f"{len(params.alpha)} stabilization parameters for {m} triangles")
    area = mesh.areas()
    G = shape_gradients(mesh)
    alpha = params.alpha
    pts = DEG5.points(mesh.corners())  # (m, q, 2)
    wq = DEG5.weights
    lam = DEG5.bary  # (q, 3)

    A = problem.eps * area[:, None, None] * np.einsum("mid,mjd->mij", G, G)
    bq = problem.convection_at(pts[..., 0], pts[..., 1])  # (m, q, 2)
    # (b . grad phi_j, phi_i) with b at the quadrature points
    bg = np.einsum("mqd,mjd->mqj", bq, G)
    A += area[:, None, None] * np.einsum("q,qi,mqj->mij", wq, lam, bg)
    bc = element_convection(mesh, problem.b)
    s = np.einsum("md,mjd->mj", bc, G)  # b_K . grad phi_j
    A += (alpha * area)[:, None, None] * s[:, :, None] * s[:, None, :]

    fq = _eval(problem.f, pts)  # (m, q)
    F = area[:, None] * np.einsum("q,qi,mq->mi", wq, lam, fq)
    F += (alpha * area * (fq @ wq))[:, None] * s
    return A, F


def assemble(mesh: Mesh, problem: Problem, params: StabParams) -> LinearSystem:
    A_loc, F_loc = element_matrices(mesh, problem, params)
    n = mesh.n_vertices
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    A = sp.coo_matrix((A_loc.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    F = np.bincount(t.ravel(), weights=F_loc.ravel(), minlength=n)

    bnd = mesh.boundary_vertices()
    keep = np.ones(n)
    keep[bnd] = 0.0
    A = (sp.diags(keep) @ A).tocsr()
    fix = np.zeros(n)
    fix[bnd] = 1.0
    A = (A + sp.diags(fix)).tocsr()
    A.eliminate_zeros()
    A.sort_indices()
    xb = mesh.vertices[bnd]
    F[bnd] = _eval(problem.g, xb)
    return LinearSystem(A, F, bnd)


def _zero_pivot_dof(A: sp.csr_matrix) -> Optional[int]:
    """First dof whose row or column is identically zero, else a dense LU probe on small systems."""
    empty_row = np.flatnonzero(np.diff(A.indptr) == 0)
    if empty_row.size:
        return int(empty_row[0])
    col_nnz = np.bincount(A.indices, minlength=A.shape[1])
    if np.any(col_nnz == 0):
        return int(np.flatnonzero(col_nnz == 0)[0])
    if A.shape[0] <= 4000:
        import scipy.linalg as sla

        P, L, U = sla.lu(A.toarray())
        d = np.abs(np.diag(U))
        bad = np.flatnonzero(d <= 1e-14 * max(d.max(), 1.0))
        if bad.size:
            return int(bad[0])
    return None


def solve(system: LinearSystem, method: str = "direct", tol: float = RESIDUAL_TOL, maxiter: int = 5000) -> np.ndarray:
    """Solve the assembled system; ``method`` is ``direct`` (sparse LU) or ``bicgstab`` (ILU-preconditioned)."""
    A = system.matrix.tocsc()
    rhs = system.rhs
    if method == "direct":
        try:
            x = spla.splu(A).solve(rhs)
        except RuntimeError as exc:
            dof = _zero_pivot_dof(system.matrix)
            where = f"zero pivot at dof {dof}" if dof is not None else "zero pivot (dof not isolated)"
            raise SolverError(f"singular matrix: {where}") from exc
    elif method == "bicgstab":
        try:
            ilu = spla.spilu(A, drop_tol=1e-5, fill_factor=20)
        except RuntimeError as exc:
            dof = _zero_pivot_dof(system.matrix)
            raise SolverError(f"incomplete factorization failed: zero pivot at dof {dof}") from exc
        M = spla.LinearOperator(A.shape, ilu.solve)
        x, info = spla.bicgstab(A, rhs, rtol=tol * 1e-2, atol=0.0, maxiter=maxiter, M=M)
        if info != 0:
            res = np.linalg.norm(A @ x - rhs) / max(np.linalg.norm(rhs), 1e-300)
            raise SolverError(f"bicgstab did not converge after {maxiter} iterations, relative residual {res:.3e}")
    else:
        raise ValueError(f"unknown solver {method!r}; choose direct or bicgstab")
    nb = np.linalg.norm(rhs)
    res = np.linalg.norm(A @ x - rhs) / (nb if nb > 0 else 1.0)
    if not np.isfinite(res) or res > tol:
        raise SolverError(f"relative residual {res:.3e} exceeds {tol:.1e}")
    return x


# ---------------------------------------------------------------------------
# norms and errors


def energy_norm_sq(mesh: Mesh, w: np.ndarray, eps: float, b: ConvectionField, params: StabParams) -> float:
    """``eps |grad w|^2 + sum_K alpha_K |b . grad w|_K^2`` with ``b`` taken at centroids."""
    G = shape_gradients(mesh)
    gw = np.einsum("mid,mi->md", G, np.asarray(w, dtype=float)[mesh.triangles])
    area = mesh.areas()
    bc = element_convection(mesh, b)
    return float(np.sum(area * (eps * np.einsum("md,md->m", gw, gw) + params.alpha * np.einsum("md,md->m", bc, gw) ** 2)))


def energy_norm(mesh: Mesh, w, eps, b, params) -> float:
    return float(np.sqrt(energy_norm_sq(mesh, w, eps, b, params)))


def energy_error(mesh: Mesh, u_h: np.ndarray, problem: Problem, params: StabParams, rule="deg5") -> float:
    """Discrete energy norm of ``u - u_h`` using the exact gradient at quadrature points."""
    if problem.exact_grad is None:
        raise ValueError("problem has no exact gradient")
    rule = get_rule(rule)
    G = shape_gradients(mesh)
    gh = np.einsum("mid,mi->md", G, np.asarray(u_h, dtype=float)[mesh.triangles])
    pts = rule.points(mesh.corners())
    ex, ey = problem.exact_grad(pts[..., 0], pts[..., 1])
    e = np.stack(np.broadcast_arrays(ex, ey), axis=-1) - gh[:, None, :]
    bc = element_convection(mesh, problem.b)
    dens = problem.eps * np.einsum("mqd,mqd->mq", e, e) + params.alpha[:, None] * np.einsum("md,mqd->mq", bc, e) ** 2
    return float(np.sqrt(np.sum(mesh.areas() * (dens @ rule.weights))))


def l2_error(mesh: Mesh, u_h: np.ndarray, exact: ScalarFn, rule="deg5") -> float:
    """``|u_h - u|_{L2}`` by a fixed element quadrature rule."""
    rule = get_rule(rule)
    pts = rule.points(mesh.corners())
    uh_q = np.einsum("qi,mi->mq", rule.bary, np.asarray(u_h, dtype=float)[mesh.triangles])
    diff = uh_q - _eval(exact, pts)
    return float(np.sqrt(np.sum(mesh.areas() * ((diff**2) @ rule.weights))))


def linf_nodal_error(mesh: Mesh, u_h: np.ndarray, exact: ScalarFn) -> float:
    return float(np.abs(np.asarray(u_h) - _eval(exact, mesh.vertices)).max())


def oscillation_indicator(u_h: np.ndarray, bounds: tuple[float, float]) -> float:
    """Undershoot below ``bounds[0]`` plus overshoot above ``bounds[1]``."""
    lo, hi = bounds
    u_h = np.asarray(u_h)
    return float(max(0.0, lo - u_h.min()) + max(0.0, u_h.max() - hi))
