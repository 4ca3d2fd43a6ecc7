"""Random instance generators and the formula-oracle suite.

Each ``check_*`` function draws seeded random instances, compares a closed form with an
independent reference and returns a :class:`CheckResult`. ``run_all`` is what the
``verify`` CLI subcommand prints.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import oracles
from .exact_error import (
    ClosedFormInputs,
    conv_deriv_sq,
    element_error_bound,
    grad_seminorm_sq,
    laplacian_sq,
    nadler_l2_sq,
    q_closed_forms,
    reduced_objective,
)
from .mesh import ElementGeometry, directional_diameter
from .stabilization import classical_alpha, nsp_alpha, nsp_alpha_theoretical

SQRT3 = np.sqrt(3.0)
MAX_SHAPE = 20.0  # diam^2 / area bound for random triangles; see the ledger


@dataclass
class CheckResult:
    name: str
    worst: float
    tol: float
    passed: bool
    n: int
    detail: str = ""
    extra: dict = field(default_factory=dict)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.name}: worst {self.worst:.3e} (tol {self.tol:.1e}, n={self.n}) {self.detail}".rstrip()


def rel_err(a, b) -> float:
    a, b = float(a), float(b)
    return abs(a - b) / max(abs(b), 1e-300)


# ---------------------------------------------------------------------------
# generators


def rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def random_triangle(rng: np.random.Generator, max_shape: float = MAX_SHAPE) -> np.ndarray:
    """Counter-clockwise corners ``(3, 2)``: a perturbed, scaled, rotated equilateral triangle."""
    base = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, SQRT3 / 2]])
    while True:
        X = base + rng.uniform(-0.35, 0.35, size=(3, 2))
        X = X @ rotation(rng.uniform(0, 2 * np.pi)).T * 10 ** rng.uniform(-2, 1) + rng.uniform(-5, 5, size=2)
        l1, l3 = X[1] - X[0], X[2] - X[0]
        area = 0.5 * (l1[0] * l3[1] - l1[1] * l3[0])
        if area <= 0:
            X = X[[0, 2, 1]]
            area = -area
        diam2 = max(np.sum((X[i] - X[j]) ** 2) for i, j in ((0, 1), (1, 2), (2, 0)))
        if area > 0 and diam2 / area <= max_shape:
            return X


def random_symmetric(rng: np.random.Generator) -> np.ndarray:
    """Symmetric, generally indefinite, entries spanning a few decades."""
    a = rng.normal(size=(2, 2)) * 10 ** rng.uniform(-2, 2)
    return 0.5 * (a + a.T)


def random_spd(rng: np.random.Generator, spread: float = 4.0) -> np.ndarray:
    """SPD with eigenvalues in ``[10^-spread/2, 10^spread/2]`` and random orientation."""
    lam = 10 ** rng.uniform(-spread / 2, spread / 2, size=2)
    R = rotation(rng.uniform(0, 2 * np.pi))
    return R @ np.diag(lam) @ R.T


def random_direction(rng: np.random.Generator, scale: Optional[float] = None) -> np.ndarray:
    th = rng.uniform(0, 2 * np.pi)
    s = 10 ** rng.uniform(-1, 1) if scale is None else scale
    return s * np.array([np.cos(th), np.sin(th)])


# ---------------------------------------------------------------------------
# checks


def check_identities(n: int = 200, seed: int = 0, tol: float = 1e-12) -> CheckResult:
    """Interpolation-error closed forms against quadrature of ``u - Pi u``."""
    rng = np.random.default_rng(seed)
    worst = {"l2": 0.0, "grad": 0.0, "conv": 0.0, "lap": 0.0}
    for _ in range(n):
        X = random_triangle(rng)
        H = random_symmetric(rng)
        b = random_direction(rng)
        g = ElementGeometry.from_points(*X)
        worst["l2"] = max(worst["l2"], rel_err(nadler_l2_sq(g, H), oracles.l2_error_sq(X, H)))
        worst["grad"] = max(worst["grad"], rel_err(grad_seminorm_sq(g, H), oracles.grad_error_sq(X, H)))
        worst["conv"] = max(worst["conv"], rel_err(conv_deriv_sq(g, H, b), oracles.conv_error_sq(X, H, b)))
        worst["lap"] = max(worst["lap"], rel_err(laplacian_sq(g, H), oracles.laplacian_sq(X, H)))
    w = max(worst.values())
    detail = " ".join(f"{k}={v:.1e}" for k, v in worst.items())
    return CheckResult("interpolation identities", w, tol, w <= tol, n, detail, worst)


def random_closed_form_inputs(rng: np.random.Generator) -> tuple[ClosedFormInputs, np.ndarray]:
    inp = ClosedFormInputs(random_spd(rng), 10 ** rng.uniform(-2, 2), 1.0, rng.uniform(0, 2 * np.pi))
    return inp, random_direction(rng)


def check_closed_forms(n: int = 100, seed: int = 1, tol: float = 1e-10) -> CheckResult:
    """Direct Q-terms on metric-equilateral triangles against the closed forms, for two rotations."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    worst_theta = 0.0
    for _ in range(n):
        inp, b = random_closed_form_inputs(rng)
        closed = q_closed_forms(inp, b)
        direct = []
        for theta in (inp.theta, rng.uniform(0, 2 * np.pi)):
            rot = ClosedFormInputs(inp.H_K, inp.C_K, inp.L, theta)
            t = element_error_bound(rot.triangle(), inp.H_K, b, 0.0, 1.0)
            direct.append((t.Q1, t.Q2, t.Q2tilde, t.Q3))
        for d, c in zip(direct[0], closed):
            worst = max(worst, rel_err(d, c))
        for d0, d1 in zip(*direct):
            worst_theta = max(worst_theta, rel_err(d1, d0))
    w = max(worst, worst_theta)
    return CheckResult(
        "closed forms", w, tol, w <= tol, n, f"match={worst:.1e} theta={worst_theta:.1e}",
        {"match": worst, "theta": worst_theta},
    )


def check_optimality(n: int = 100, seed: int = 2, grid: int = 41) -> CheckResult:
    """The theoretical parameter minimizes the reduced objective over a log grid in ``[a/10, 10a]``."""
    rng = np.random.default_rng(seed)
    worst = -np.inf  # largest (P(a*) - min grid P) / P(a*); must be <= 0 up to round-off
    for _ in range(n):
        inp, b = random_closed_form_inputs(rng)
        eps = 10 ** rng.uniform(-8, 0)
        a_star = nsp_alpha_theoretical(inp.triangle(), inp.H_K, b, eps)
        alphas = a_star * np.logspace(-1, 1, grid)
        p_star = float(reduced_objective(a_star, inp, b, eps))
        p_grid = reduced_objective(alphas, inp, b, eps)
        worst = max(worst, (p_star - float(p_grid.min())) / p_star)
    tol = 1e-12
    return CheckResult("optimality of theoretical parameter", worst, tol, worst <= tol, n)


def check_limits(n: int = 50, seed: int = 3, tol: float = 1e-12) -> CheckResult:
    """Practical NSP on equilateral triangles with ``H = I`` reproduces both classical branches."""
    rng = np.random.default_rng(seed)
    worst_conv = worst_diff = 0.0
    for _ in range(n):
        h = 10 ** rng.uniform(-3, 0)
        R = rotation(rng.uniform(0, 2 * np.pi))
        X = np.array([[0.0, 0.0], [h, 0.0], [h / 2, SQRT3 * h / 2]]) @ R.T
        g = ElementGeometry.from_points(*X)
        b = random_direction(rng)
        eps = 10 ** rng.uniform(-6, 0)
        bn = float(np.linalg.norm(b))
        worst_conv = max(worst_conv, rel_err(nsp_alpha(g, np.eye(2), b, 0.0), h / (2 * bn)))
        worst_diff = max(worst_diff, rel_err(nsp_alpha(g, np.eye(2), np.zeros(2), eps), h * h / (12 * eps)))
        # same thing through the classical formula in its two regimes
        worst_diff = max(worst_diff, rel_err(classical_alpha(h, 0.0, eps), h * h / (12 * eps)))
    w = max(worst_conv, worst_diff)
    return CheckResult(
        "NSP limit identities", w, tol, w <= tol, n, f"conv={worst_conv:.1e} diff={worst_diff:.1e}",
        {"conv": worst_conv, "diff": worst_diff},
    )


def metric_equilateral_instance(rng: np.random.Generator) -> tuple[ElementGeometry, np.ndarray, np.ndarray]:
    inp, b = random_closed_form_inputs(rng)
    return inp.triangle(), inp.H_K, b


def interval_ratios(
    n: int = 100, seed: int = 4, alpha_fn: Callable = nsp_alpha_theoretical
) -> np.ndarray:
    """``alpha / (h_K / |b|)`` with ``eps = 0`` and ``h_K`` the directional diameter."""
    rng = np.random.default_rng(seed)
    out = np.empty(n)
    for i in range(n):
        g, H, b = metric_equilateral_instance(rng)
        hK = directional_diameter(g, b)
        out[i] = alpha_fn(g, H, b, 0.0) / (hK / np.linalg.norm(b))
    return out


def check_interval(n: int = 100, seed: int = 4, theoretical: bool = True, tol: float = 1e-9) -> CheckResult:
    fn = nsp_alpha_theoretical if theoretical else nsp_alpha
    r = interval_ratios(n, seed, fn)
    lo, hi = 0.5, 1.0 / SQRT3
    worst = float(max(lo - r.min(), r.max() - hi, 0.0))
    name = "interval bound (" + ("theoretical" if theoretical else "practical") + ")"
    return CheckResult(name, worst, tol, worst <= tol, n, f"ratio range [{r.min():.4f}, {r.max():.4f}]",
                       {"min": float(r.min()), "max": float(r.max())})


def run_all(seed: int = 0) -> list[CheckResult]:
    return [
        check_identities(seed=seed),
        check_closed_forms(seed=seed + 1),
        check_optimality(seed=seed + 2),
        check_limits(seed=seed + 3),
        check_interval(seed=seed + 4, theoretical=True),
        check_interval(seed=seed + 4, theoretical=False),
    ]
