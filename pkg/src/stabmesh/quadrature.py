"""Symmetric quadrature rules on triangles (barycentric points, weights summing to 1)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TriangleRule:
    name: str
    degree: int
    bary: np.ndarray  # (q, 3)
    weights: np.ndarray  # (q,), sum == 1

    def points(self, corners: np.ndarray) -> np.ndarray:
        """Map the rule onto triangles.

        ``corners`` has shape ``(m, 3, 2)``; the result has shape ``(m, q, 2)``.
        """
        return np.einsum("qi,mid->mqd", self.bary, corners)


def _orbit3(a: float, w: float) -> tuple[list, list]:
    b = 0.5 * (1.0 - a)
    return [[a, b, b], [b, a, b], [b, b, a]], [w] * 3


def _orbit6(a: float, b: float, w: float) -> tuple[list, list]:
    c = 1.0 - a - b
    pts = [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]]
    return pts, [w] * 6


def _build(name: str, degree: int, centroid_weight: float, orbits) -> TriangleRule:
    pts = [[1.0 / 3.0] * 3]
    wts = [centroid_weight]
    for p, w in orbits:
        pts += p
        wts += w
    return TriangleRule(name, degree, np.array(pts), np.array(wts))


_S15 = np.sqrt(15.0)

# Radon 7-point rule, exact for degree 5.
DEG5 = _build(
    "deg5-7pt",
    5,
    9.0 / 40.0,
    [
        _orbit3((9.0 - 2.0 * _S15) / 21.0, (155.0 + _S15) / 1200.0),
        _orbit3((9.0 + 2.0 * _S15) / 21.0, (155.0 - _S15) / 1200.0),
    ],
)

# Dunavant 16-point rule, exact for degree 8.
DEG8 = _build(
    "deg8-16pt",
    8,
    0.144315607677787,
    [
        _orbit3(0.081414823414554, 0.095091634267285),
        _orbit3(0.658861384496480, 0.103217370534718),
        _orbit3(0.898905543365938, 0.032458497623198),
        _orbit6(0.008394777409958, 0.263112829634638, 0.027230314174435),
    ],
)

RULES = {"deg5": DEG5, "deg8": DEG8}


def get_rule(name: str | TriangleRule) -> TriangleRule:
    if isinstance(name, TriangleRule):
        return name
    try:
        return RULES[name]
    except KeyError:
        raise ValueError(f"unknown quadrature rule {name!r}; choose from {sorted(RULES)}") from None
