"""Brute-force references for the closed-form interpolation errors.

These evaluate the integrals of ``u - Pi u`` for ``u = x^T H x / 2`` directly with a
degree-5 triangle rule (exact for the degree-4 integrands involved) and never touch
the edge-product formulas they check.
"""

from __future__ import annotations

import numpy as np

from .quadrature import DEG5


def _setup(X, H):
    X = np.asarray(X, dtype=float)
    # u - Pi u is unchanged by translation (it only adds a linear term); centring avoids cancellation
    X = X - X.mean(axis=0)
    H = np.asarray(H, dtype=float)
    x1, x2, x3 = X
    area = 0.5 * ((x2[0] - x1[0]) * (x3[1] - x1[1]) - (x2[1] - x1[1]) * (x3[0] - x1[0]))
    # barycentric gradients: grad(lambda_i) = rot90(x_{i+2} - x_{i+1}) / (2 area)
    grads = np.empty((3, 2))
    for i in range(3):
        e = X[(i + 2) % 3] - X[(i + 1) % 3]
        grads[i] = np.array([-e[1], e[0]]) / (2.0 * area)
    uv = 0.5 * np.einsum("id,de,ie->i", X, H, X)
    pts = DEG5.bary @ X
    return X, H, area, grads, uv, pts


def l2_error_sq(X, H) -> float:
    X, H, area, grads, uv, pts = _setup(X, H)
    u = 0.5 * np.einsum("qd,de,qe->q", pts, H, pts)
    pu = DEG5.bary @ uv
    return float(area * DEG5.weights @ (u - pu) ** 2)


def _grad_error(X, H):
    X, H, area, grads, uv, pts = _setup(X, H)
    g_interp = uv @ grads
    return area, pts @ H.T - g_interp


def grad_error_sq(X, H) -> float:
    area, ge = _grad_error(X, H)
    return float(area * DEG5.weights @ np.einsum("qd,qd->q", ge, ge))


def conv_error_sq(X, H, b) -> float:
    area, ge = _grad_error(X, H)
    return float(area * DEG5.weights @ (ge @ np.asarray(b, dtype=float)) ** 2)


def laplacian_sq(X, H) -> float:
    X, H, area, *_ = _setup(X, H)
    return float(np.trace(H) ** 2 * area)


def chord_sampling_diameter(X, b, n: int = 4001) -> float:
    """Longest chord parallel to ``b`` found by sampling lines across the triangle."""
    X = np.asarray(X, dtype=float)
    b = np.asarray(b, dtype=float)
    u = b / np.linalg.norm(b)
    nrm = np.array([-u[1], u[0]])
    s = X @ nrm
    best = 0.0
    for c in np.linspace(s.min(), s.max(), n):
        hits = []
        for i in range(3):
            p, q = X[i], X[(i + 1) % 3]
            sp, sq = p @ nrm, q @ nrm
            if sp == sq:
                if abs(sp - c) < 1e-15:
                    hits += [p @ u, q @ u]
                continue
            t = (c - sp) / (sq - sp)
            if -1e-12 <= t <= 1 + 1e-12:
                hits.append((p + t * (q - p)) @ u)
        if len(hits) >= 2:
            best = max(best, max(hits) - min(hits))
    return best
