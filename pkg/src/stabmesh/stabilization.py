"""Per-element stabilization parameters.

Four classical strategies share ``alpha = h/(2|b|) min(1, Pe/3)`` and differ in the
element size ``h`` (LEP, PLE, DDC, DEE). NSP uses the recovered Hessian.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .mesh import ElementGeometry, H_KINDS, Mesh, h_variants
from .recovery import HessianField

log = logging.getLogger(__name__)

STRATEGIES = H_KINDS + ("NSP",)
ZERO_SIZE = 1e-12  # relative to sqrt|K|
SQRT3 = np.sqrt(3.0)
# minimizer constant of the element indicator; see the decisions ledger for the 1/720 correction
THEORETICAL_CONST = np.sqrt(8.0 * SQRT3 / 15.0)

ConvectionField = Union[np.ndarray, Callable[[np.ndarray, np.ndarray], np.ndarray]]


@dataclass
class StabParams:
    strategy: str
    alpha: np.ndarray
    peclet: Optional[np.ndarray] = None
    fallback: bool = False

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        if self.alpha.size and not (np.all(np.isfinite(self.alpha)) and np.all(self.alpha >= 0)):
            raise ValueError("stabilization parameters must be finite and nonnegative")

    @classmethod
    def zero(cls, mesh: Mesh) -> "StabParams":
        """Unstabilized Galerkin."""
        return cls("NONE", np.zeros(mesh.n_triangles))


def classical_alpha(hK, b_norm, eps):
    """``hK/(2|b|)`` when ``Pe >= 3``, otherwise ``hK^2/(12 eps)``. Broadcasts."""
    hK = np.asarray(hK, dtype=float)
    b_norm = np.asarray(b_norm, dtype=float)
    if np.any(hK <= 0):
        raise ValueError("element size must be positive")
    if not eps > 0:
        raise ValueError(f"diffusivity must be positive, got {eps}")
    pe = b_norm * hK / (2.0 * eps)
    with np.errstate(divide="ignore", invalid="ignore"):
        conv = hK / (2.0 * b_norm)
    out = np.where(pe >= 3.0, conv, hK**2 / (12.0 * eps))
    return out if out.ndim else float(out)


def peclet(hK, b_norm, eps):
    return np.asarray(b_norm) * np.asarray(hK) / (2.0 * eps)


def _nsp_inputs(area, H, b, eps):
    H = np.asarray(H, dtype=float)
    b = np.asarray(b, dtype=float)
    det = H[..., 0, 0] * H[..., 1, 1] - H[..., 0, 1] * H[..., 1, 0]
    tr = H[..., 0, 0] + H[..., 1, 1]
    if np.any(det <= 0) or np.any(tr <= 0):
        raise ValueError("H_K must be symmetric positive definite")
    bhb = np.einsum("...i,...ij,...j->...", b, H, b)
    if eps == 0 and np.any(bhb == 0):
        raise ValueError("parameter undefined: zero convection and zero diffusion")
    if eps < 0:
        raise ValueError(f"diffusivity must be nonnegative, got {eps}")
    return np.asarray(area, dtype=float), det, tr, bhb


def nsp_alphas(area, H, b, eps):
    """Practical NSP parameter, vectorized over elements."""
    area, det, tr, bhb = _nsp_inputs(area, H, b, eps)
    s = SQRT3 * area * bhb / np.sqrt(det) + 6.75 * eps**2 * tr**2 / det
    return area / np.sqrt(s)


def nsp_alphas_theoretical(area, H, b, eps):
    """Minimizer of the closed-form element indicator, vectorized."""
    area, det, tr, bhb = _nsp_inputs(area, H, b, eps)
    s = area * bhb / np.sqrt(det) + 6.0 * SQRT3 * eps**2 * tr**2 / det
    return THEORETICAL_CONST * area / np.sqrt(s)


def nsp_alpha(geom: ElementGeometry, H_K, b, eps: float) -> float:
    return float(nsp_alphas(geom.area, H_K, b, eps))


def nsp_alpha_theoretical(geom: ElementGeometry, H_K, b, eps: float) -> float:
    return float(nsp_alphas_theoretical(geom.area, H_K, b, eps))


def element_convection(mesh: Mesh, b: ConvectionField) -> np.ndarray:
    """Convection per element, evaluated at centroids when ``b`` is a function."""
    if callable(b):
        c = mesh.centroids()
        out = np.asarray(b(c[:, 0], c[:, 1]), dtype=float)
        if out.shape == (2, mesh.n_triangles):
            out = out.T
        return np.broadcast_to(out, (mesh.n_triangles, 2)).copy()
    return np.broadcast_to(np.asarray(b, dtype=float), (mesh.n_triangles, 2)).copy()


def compute_field(
    mesh: Mesh,
    strategy: str,
    b: ConvectionField,
    eps: float,
    hessian: Optional[HessianField] = None,
) -> StabParams:
    """Stabilization parameter on every element of ``mesh``."""
    strategy = strategy.upper()
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    bK = element_convection(mesh, b)
    if strategy == "NSP":
        if hessian is None:
            raise ValueError("NSP needs a recovered Hessian")
        if len(hessian.element) != mesh.n_triangles:
            raise ValueError("Hessian field does not match the mesh")
        return StabParams("NSP", nsp_alphas(mesh.areas(), hessian.element, bK, eps))
    hK = h_variants(mesh.corners(), bK, strategy)
    bn = np.linalg.norm(bK, axis=1)
    # a projected size can vanish (PLE: longest edge orthogonal to b); alpha -> 0 is its limit
    zero = hK <= ZERO_SIZE * np.sqrt(mesh.areas())
    alpha = np.zeros(mesh.n_triangles)
    if np.any(~zero):
        alpha[~zero] = classical_alpha(hK[~zero], bn[~zero], eps)
    if np.any(zero):
        log.warning("%s: element size vanishes on %d element(s), alpha set to 0 there", strategy, int(zero.sum()))
    return StabParams(strategy, alpha, peclet(hK, bn, eps))
