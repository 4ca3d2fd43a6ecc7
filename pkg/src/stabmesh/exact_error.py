"""Exact element-wise interpolation errors of quadratic functions.

For ``u = x^T H x / 2`` on a triangle with edge vectors ``l1, l2, l3`` the P1
interpolation error has closed forms in the products ``d_ij = l_i . H l_j``.
All functions broadcast over leading axes: edge vectors ``(..., 2)``,
Hessians ``(..., 2, 2)``, areas ``(...)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import ElementGeometry

SQRT3 = np.sqrt(3.0)


def _dots(l1, l2, l3, H):
    """The symmetric 3x3 array ``d_ij = l_i . H l_j``, shape ``(..., 3, 3)``."""
    L = np.stack([l1, l2, l3], axis=-2)  # (..., 3, 2)
    return np.einsum("...id,...de,...je->...ij", L, H, L)


def _geom_arrays(geom: ElementGeometry):
    return geom.l1, geom.l2, geom.l3, geom.area


def nadler_terms(l1, l2, l3, area, H):
    """Squared L2 norm of ``u - Pi u``: ``|K|/720 [(d11+d22+d33)^2 + d11^2+d22^2+d33^2]``.

    The constant is 1/720 for ``u = x^T H x / 2``; 1/180 holds for ``u = x^T H x``.
    """
    d = _dots(l1, l2, l3, H)
    diag = np.stack([d[..., 0, 0], d[..., 1, 1], d[..., 2, 2]], axis=-1)
    return area / 720.0 * (diag.sum(axis=-1) ** 2 + (diag**2).sum(axis=-1))


def _D(d):
    d12, d13, d23 = d[..., 0, 1], d[..., 0, 2], d[..., 1, 2]
    return d12**2 + d23**2, d12**2 + d13**2, 2.0 * d12**2


def grad_terms(l1, l2, l3, area, H):
    """Squared H1 seminorm of the interpolation error."""
    D11, D22, D12 = _D(_dots(l1, l2, l3, H))
    s = D11 * np.einsum("...d,...d", l1, l1) + D22 * np.einsum("...d,...d", l2, l2)
    s = s + D12 * np.einsum("...d,...d", l1, l2)
    return s / (48.0 * area)


def conv_terms(l1, l2, l3, area, H, b):
    """Squared L2 norm of ``b . grad(u - Pi u)`` for ``b`` constant on the element."""
    b = np.asarray(b, dtype=float)
    perp = np.stack([b[..., 1], -b[..., 0]], axis=-1)
    k1 = np.einsum("...d,...d", perp, l1)
    k2 = np.einsum("...d,...d", perp, l2)
    D11, D22, D12 = _D(_dots(l1, l2, l3, H))
    return (D11 * k1**2 + D22 * k2**2 + D12 * k1 * k2) / (48.0 * area)


def laplacian_terms(l1, l2, l3, area, H):
    """Squared L2 norm of the Laplacian, written through edge products."""
    d = _dots(l1, l2, l3, H)
    num = (
        np.einsum("...d,...d", l2, l2) * d[..., 0, 0]
        - 2.0 * np.einsum("...d,...d", l1, l2) * d[..., 0, 1]
        + np.einsum("...d,...d", l1, l1) * d[..., 1, 1]
    )
    return num**2 / (16.0 * area**3)


def nadler_l2_sq(geom: ElementGeometry, H) -> float:
    return float(nadler_terms(*_geom_arrays(geom), np.asarray(H, float)))


def grad_seminorm_sq(geom: ElementGeometry, H) -> float:
    return float(grad_terms(*_geom_arrays(geom), np.asarray(H, float)))


def conv_deriv_sq(geom: ElementGeometry, H, b) -> float:
    return float(conv_terms(*_geom_arrays(geom), np.asarray(H, float), b))


def laplacian_sq(geom: ElementGeometry, H) -> float:
    return float(laplacian_terms(*_geom_arrays(geom), np.asarray(H, float)))


@dataclass(frozen=True)
class ErrorTerms:
    d: np.ndarray
    D11: float
    D22: float
    D12: float
    k1: float
    k2: float
    Q1: float
    Q2: float
    Q2tilde: float
    Q3: float
    E: float


def element_error_bound(geom: ElementGeometry, H, b, eps: float, alpha: float) -> ErrorTerms:
    """All four error contributions and ``E = Q1/a + eps Q2 + a Q2t + a eps^2 Q3``."""
    if alpha <= 0:
        raise ValueError(f"stabilization parameter must be positive, got {alpha}")
    if eps < 0:
        raise ValueError(f"diffusivity must be nonnegative, got {eps}")
    H = np.asarray(H, dtype=float)
    b = np.asarray(b, dtype=float)
    d = _dots(geom.l1, geom.l2, geom.l3, H)
    D11, D22, D12 = _D(d)
    perp = np.array([b[1], -b[0]])
    q1 = nadler_l2_sq(geom, H)
    q2 = grad_seminorm_sq(geom, H)
    q2t = conv_deriv_sq(geom, H, b)
    q3 = laplacian_sq(geom, H)
    E = q1 / alpha + eps * q2 + alpha * q2t + alpha * eps**2 * q3
    return ErrorTerms(
        d=d,
        D11=float(D11),
        D22=float(D22),
        D12=float(D12),
        k1=float(perp @ geom.l1),
        k2=float(perp @ geom.l2),
        Q1=q1,
        Q2=q2,
        Q2tilde=q2t,
        Q3=q3,
        E=E,
    )


def error_indicator(l1, l2, l3, area, H, b, eps, alpha):
    """Vectorized ``E_K`` over many elements."""
    return (
        nadler_terms(l1, l2, l3, area, H) / alpha
        + eps * grad_terms(l1, l2, l3, area, H)
        + alpha * conv_terms(l1, l2, l3, area, H, b)
        + alpha * eps**2 * laplacian_terms(l1, l2, l3, area, H)
    )


# ---------------------------------------------------------------------------
# closed forms on metric-equilateral triangles


def _oriented_eig(H):
    """Eigen-decomposition ``H = R^T diag(lam) R`` with rows of ``R`` the eigenvectors, det R = +1."""
    lam, V = np.linalg.eigh(H)
    lam = lam[::-1]
    V = V[:, ::-1].copy()
    if np.linalg.det(V) < 0:
        V[:, 1] *= -1.0
    return lam, V.T


@dataclass(frozen=True)
class ClosedFormInputs:
    """Parameters of a metric-equilateral element.

    ``H_K`` is SPD, ``C_K`` scales the metric ``C_K H_K``, ``L`` is the reference edge
    length and ``theta`` the rotation of the reference triangle.
    """

    H_K: np.ndarray
    C_K: float
    L: float = 1.0
    theta: float = 0.0

    def __post_init__(self):
        H = np.asarray(self.H_K, dtype=float)
        if H.shape != (2, 2) or not np.allclose(H, H.T, rtol=0, atol=1e-12 * max(1.0, np.abs(H).max())):
            raise ValueError("H_K must be a symmetric 2x2 matrix")
        lam = np.linalg.eigvalsh(H)
        if lam.min() <= 0:
            raise ValueError(f"H_K must be positive definite, eigenvalues {lam}")
        if self.C_K <= 0 or self.L <= 0:
            raise ValueError("C_K and L must be positive")
        object.__setattr__(self, "H_K", H)

    @property
    def spectral(self):
        return _oriented_eig(self.H_K)

    @property
    def lambda1(self) -> float:
        return float(self.spectral[0][0])

    @property
    def lambda2(self) -> float:
        return float(self.spectral[0][1])

    @property
    def reference_area(self) -> float:
        return SQRT3 / 4.0 * self.L**2

    @property
    def area(self) -> float:
        return self.reference_area / (self.C_K * np.sqrt(np.linalg.det(self.H_K)))

    def A(self, b) -> np.ndarray:
        """Rotated perpendicular of ``b``: ``R [[0, 1], [-1, 0]] b``."""
        _, R = self.spectral
        return R @ np.array([[0.0, 1.0], [-1.0, 0.0]]) @ np.asarray(b, dtype=float)

    def map_matrix(self) -> np.ndarray:
        """``F_K = C^{1/2} Lambda^{1/2} R`` with ``F_K^T F_K = C_K H_K``."""
        lam, R = self.spectral
        return np.sqrt(self.C_K) * np.diag(np.sqrt(lam)) @ R

    def triangle(self, origin=(0.0, 0.0)) -> ElementGeometry:
        """The physical triangle mapped onto the rotated equilateral reference triangle."""
        L, th = self.L, self.theta
        xh = np.array(
            [[0.0, 0.0], [L * np.cos(th), L * np.sin(th)], [L * np.cos(np.pi / 3 + th), L * np.sin(np.pi / 3 + th)]]
        )
        Finv = np.linalg.inv(self.map_matrix())
        x = xh @ Finv.T + np.asarray(origin, dtype=float)
        return ElementGeometry.from_points(*x)


def q_closed_forms(inp: ClosedFormInputs, b) -> tuple[float, float, float, float]:
    """``(Q1, Q2, Q2tilde, Q3)`` for a triangle that is equilateral in the metric ``C_K H_K``."""
    H, C, L = inp.H_K, inp.C_K, inp.L
    b = np.asarray(b, dtype=float)
    det = float(np.linalg.det(H))
    tr = float(np.trace(H))
    area = inp.area
    L4 = L**4
    q1 = L4 * area / (60.0 * C**2)
    q2 = L4 * tr / (32.0 * SQRT3 * C**2 * np.sqrt(det))
    q2t = L4 * float(b @ H @ b) / (32.0 * SQRT3 * C**2 * np.sqrt(det))
    q3 = 3.0 * L4 * tr**2 / (16.0 * C**2 * area * det)
    return q1, q2, q2t, q3


def q2tilde_from_A(inp: ClosedFormInputs, b) -> float:
    """The eigen-frame form ``L^4 sqrt(det H) / (32 sqrt3 C^2) (A1^2/lam1 + A2^2/lam2)``."""
    A = inp.A(b)
    det = float(np.linalg.det(inp.H_K))
    return inp.L**4 * np.sqrt(det) / (32.0 * SQRT3 * inp.C_K**2) * (A[0] ** 2 / inp.lambda1 + A[1] ** 2 / inp.lambda2)


def reduced_objective(alpha, inp: ClosedFormInputs, b, eps: float):
    """``E_K C_K^2 / L^4`` as a function of the stabilization parameter, from the closed forms."""
    q1, q2, q2t, q3 = q_closed_forms(inp, b)
    alpha = np.asarray(alpha, dtype=float)
    scale = inp.C_K**2 / inp.L**4
    return scale * (q1 / alpha + eps * q2 + alpha * (q2t + eps**2 * q3))
