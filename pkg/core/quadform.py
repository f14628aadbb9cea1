"""
Ternary quadratic forms

    Q(y) = a y1^2 + b y1 y2 + c y1 y3 + d y2^2 + e y2 y3 + f y3^2

Positivity is decided through the leading principal minors of the
symmetric matrix (Sylvester criterion); the largest uniform margin ε with
Q(y) >= ε |y|^2 is found by bisection on the shifted minors, which are
all positive exactly while ε stays below the smallest eigenvalue.
"""
from __future__ import annotations

from dataclasses import astuple, dataclass
from typing import Tuple

import numpy as np

DEFAULT_TOL = 1e-10


class HypothesisFailed(ValueError):
    """The form is not positive definite, so no positive margin exists."""


@dataclass(frozen=True)
class QuadForm3:
    """Coefficients (a, b, c, d, e, f); b, c, e are full cross-term coefficients."""

    a: float
    b: float
    c: float
    d: float
    e: float
    f: float

    def matrix(self, eps: float = 0.0) -> np.ndarray:
        """Symmetric matrix of the form with the diagonal shifted by -eps."""
        return np.array([
            [self.a - eps, self.b / 2.0, self.c / 2.0],
            [self.b / 2.0, self.d - eps, self.e / 2.0],
            [self.c / 2.0, self.e / 2.0, self.f - eps],
        ])

    def evaluate(self, y: np.ndarray) -> np.ndarray:
        """Form value; y has shape (3,) or (..., 3)."""
        y = np.asarray(y, dtype=float)
        y1, y2, y3 = y[..., 0], y[..., 1], y[..., 2]
        return (self.a * y1 ** 2 + self.b * y1 * y2 + self.c * y1 * y3
                + self.d * y2 ** 2 + self.e * y2 * y3 + self.f * y3 ** 2)

    def to_dict(self):
        return dict(zip("abcdef", astuple(self)))


def minors_at(q: QuadForm3, eps: float) -> Tuple[float, float, float]:
    """Leading principal minors g1, g2, g3 of the matrix shifted by -eps."""
    a, d, f = q.a - eps, q.d - eps, q.f - eps
    b, c, e = q.b, q.c, q.e
    g1 = a
    g2 = a * d - b * b / 4.0
    # cofactor expansion of the full symmetric determinant
    g3 = a * d * f + b * c * e / 4.0 - c * c * d / 4.0 - b * b * f / 4.0 - a * e * e / 4.0
    return g1, g2, g3


def satisfies_hypothesis(q: QuadForm3) -> bool:
    """a > 0, ad - b^2/4 > 0 and det > 0, all strict."""
    return all(g > 0 for g in minors_at(q, 0.0))


def max_margin(q: QuadForm3, tol: float = DEFAULT_TOL) -> float:
    """Largest ε (within tol) keeping every shifted minor positive."""
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol!r}")
    if not satisfies_hypothesis(q):
        raise HypothesisFailed(f"form {q.to_dict()} is not positive definite")

    # the smallest eigenvalue never exceeds the smallest diagonal entry
    lo, hi = 0.0, min(q.a, q.d, q.f)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if all(g > 0 for g in minors_at(q, mid)):
            lo = mid
        else:
            hi = mid
    return lo
