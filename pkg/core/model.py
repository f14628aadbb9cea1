"""
Model: constants, coexistence steady state and sensitivity functions

Everything the other modules need to know about the two-species
chemotaxis-competition system

    u_t = d1 Δu - ∇·(u χ1(w) ∇w) + μ1 u (1 - u - a1 v)
    v_t = d2 Δv - ∇·(v χ2(w) ∇w) + μ2 v (1 - a2 u - v)
    w_t = d3 Δw + α u + β v - γ w

with zero-flux boundaries, plus the hypothesis checkers for the
constant-sensitivity and signal-dependent-sensitivity stability theorems.

All values here are immutable; every function is pure.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, replace
from enum import Enum
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

# 512 log-spaced signal values on [1e-3, 1e3]
DEFAULT_SAMPLE_GRID = np.logspace(-3.0, 3.0, 512)

FD_STEP_FLOOR = 1e-6
FD_STEP_REL = 1e-6
BOUND_SAFETY = 1.0


class ParameterError(ValueError):
    """Model constants that violate a structural requirement."""


@dataclass(frozen=True)
class ModelParams:
    """All PDE constants plus the sensitivity upper bounds M1, M2."""

    d1: float
    d2: float
    d3: float
    mu1: float
    mu2: float
    a1: float
    a2: float
    alpha: float
    beta: float
    gamma: float
    M1: float = 0.0
    M2: float = 0.0

    def __post_init__(self) -> None:
        for name, value in asdict(self).items():
            if not math.isfinite(value):
                raise ParameterError(f"{name} must be finite, got {value!r}")
            if value < 0:
                raise ParameterError(f"{name} must be nonnegative, got {value!r}")

    def check_stability_regime(self) -> None:
        """Raise unless the constants fit the a1, a2 ∈ (0,1) stability analysis."""
        for name in ("d1", "d2", "d3", "mu1", "mu2", "alpha", "beta", "gamma"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be strictly positive, got {getattr(self, name)!r}")
        for name in ("a1", "a2"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ParameterError(f"{name} must lie in (0,1), got {value!r}")

    def with_bounds(self, M1: float, M2: float) -> "ModelParams":
        return replace(self, M1=float(M1), M2=float(M2))


@dataclass(frozen=True)
class SteadyState:
    """Coexistence equilibrium (u*, v*, w*)."""

    u_star: float
    v_star: float
    w_star: float

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.u_star, self.v_star, self.w_star)


def steady_state(p: ModelParams) -> SteadyState:
    """u* = (1-a1)/(1-a1 a2), v* = (1-a2)/(1-a1 a2), w* = (α u* + β v*)/γ."""
    if p.a1 * p.a2 >= 1.0:
        raise ParameterError(f"a1*a2 = {p.a1 * p.a2!r} >= 1: no coexistence state")
    if not (0.0 < p.a1 < 1.0 and 0.0 < p.a2 < 1.0):
        raise ParameterError(f"coexistence needs a1, a2 in (0,1), got a1={p.a1!r}, a2={p.a2!r}")
    if p.gamma <= 0:
        raise ParameterError("gamma must be positive for w* to exist")
    denom = 1.0 - p.a1 * p.a2
    u_star = (1.0 - p.a1) / denom
    v_star = (1.0 - p.a2) / denom
    w_star = (p.alpha * u_star + p.beta * v_star) / p.gamma
    return SteadyState(u_star, v_star, w_star)


# ---------------------------------------------------------------------------
# Sensitivity functions
# ---------------------------------------------------------------------------

class ChiKind(Enum):
    CONSTANT = "constant"
    RECIPROCAL = "reciprocal"
    TABULATED = "tabulated"


ChiFunction = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SensitivitySpec:
    """
    χ1, χ2 as functions of the signal w.

    - CONSTANT:   χi(w) = c_i                (c = (chi1, chi2))
    - RECIPROCAL: χi(w) = K_i / w, w > 0     (c = (K1, K2))
    - TABULATED:  sample functions, either interpolated from a table or
                  arbitrary callables (derivatives by central differences
                  unless supplied)
    """

    kind: ChiKind
    coefficients: Tuple[float, float] = (0.0, 0.0)
    functions: Optional[Tuple[ChiFunction, ChiFunction]] = None
    derivatives: Optional[Tuple[ChiFunction, ChiFunction]] = None

    @staticmethod
    def constant(chi1: float, chi2: float) -> "SensitivitySpec":
        if chi1 < 0 or chi2 < 0:
            raise ParameterError("constant sensitivities must be nonnegative")
        return SensitivitySpec(ChiKind.CONSTANT, (float(chi1), float(chi2)))

    @staticmethod
    def reciprocal(K1: float, K2: float) -> "SensitivitySpec":
        if K1 < 0 or K2 < 0:
            raise ParameterError("reciprocal coefficients must be nonnegative")
        return SensitivitySpec(ChiKind.RECIPROCAL, (float(K1), float(K2)))

    @staticmethod
    def from_functions(chi1: ChiFunction, chi2: ChiFunction,
                       dchi1: Optional[ChiFunction] = None,
                       dchi2: Optional[ChiFunction] = None) -> "SensitivitySpec":
        derivatives = (dchi1, dchi2) if dchi1 is not None and dchi2 is not None else None
        return SensitivitySpec(ChiKind.TABULATED, functions=(chi1, chi2), derivatives=derivatives)

    @staticmethod
    def tabulated(w: Sequence[float], chi1: Sequence[float], chi2: Sequence[float]) -> "SensitivitySpec":
        """Piecewise-linear interpolation of sampled values (constant beyond the ends)."""
        w_pts = np.asarray(w, dtype=float)
        c1 = np.asarray(chi1, dtype=float)
        c2 = np.asarray(chi2, dtype=float)
        if w_pts.ndim != 1 or w_pts.size < 2 or c1.shape != w_pts.shape or c2.shape != w_pts.shape:
            raise ParameterError("sensitivity table needs matching 1D columns with >= 2 rows")
        if np.any(np.diff(w_pts) <= 0):
            raise ParameterError("sensitivity table w column must be strictly increasing")
        if np.any(c1 < 0) or np.any(c2 < 0):
            raise ParameterError("tabulated sensitivities must be nonnegative")
        return SensitivitySpec.from_functions(
            lambda x: np.interp(x, w_pts, c1),
            lambda x: np.interp(x, w_pts, c2),
        )

    def chi(self, i: int, w: Any) -> np.ndarray:
        """χ_i(w) for i in {1, 2}; vectorised over w."""
        w = np.asarray(w, dtype=float)
        if self.kind is ChiKind.CONSTANT:
            return np.full_like(w, self.coefficients[i - 1])
        if self.kind is ChiKind.RECIPROCAL:
            if np.any(w <= 0):
                raise ParameterError("reciprocal sensitivity needs w > 0")
            return self.coefficients[i - 1] / w
        return np.asarray(self.functions[i - 1](w), dtype=float)

    def evaluate(self, w: Any) -> Tuple[np.ndarray, np.ndarray]:
        return self.chi(1, w), self.chi(2, w)

    def derivative(self, i: int, w: Any) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if self.kind is ChiKind.CONSTANT:
            return np.zeros_like(w)
        if self.kind is ChiKind.RECIPROCAL:
            if np.any(w <= 0):
                raise ParameterError("reciprocal sensitivity needs w > 0")
            return -self.coefficients[i - 1] / w ** 2
        if self.derivatives is not None:
            return np.asarray(self.derivatives[i - 1](w), dtype=float)
        h = np.maximum(FD_STEP_FLOOR, FD_STEP_REL * np.abs(w))
        f = self.functions[i - 1]
        return (np.asarray(f(w + h)) - np.asarray(f(w - h))) / (2.0 * h)


def sensitivity_bounds(spec: SensitivitySpec, sample_grid: Optional[Sequence[float]] = None,
                       safety: float = BOUND_SAFETY) -> Tuple[float, float]:
    """M1, M2 as the sampled supremum of χ1, χ2 times a safety factor."""
    if spec.kind is ChiKind.CONSTANT:
        return spec.coefficients[0] * safety, spec.coefficients[1] * safety
    grid = DEFAULT_SAMPLE_GRID if sample_grid is None else np.asarray(sample_grid, dtype=float)
    c1, c2 = spec.evaluate(grid)
    return float(np.max(c1)) * safety, float(np.max(c2)) * safety


def bounds_dominate(p: ModelParams, spec: SensitivitySpec,
                    sample_grid: Optional[Sequence[float]] = None) -> bool:
    """True iff M1 >= χ1 and M2 >= χ2 on every sample (and χ is nonnegative there)."""
    grid = DEFAULT_SAMPLE_GRID if sample_grid is None else np.asarray(sample_grid, dtype=float)
    c1, c2 = spec.evaluate(grid)
    if np.any(c1 < 0) or np.any(c2 < 0):
        return False
    return bool(np.all(c1 <= p.M1) and np.all(c2 <= p.M2))


# ---------------------------------------------------------------------------
# Hypothesis checkers
# ---------------------------------------------------------------------------

class Theorem12Verdict(Enum):
    CASE_I = "case_i"
    CASE_II = "case_ii"
    NEITHER = "neither"


@dataclass(frozen=True)
class Theorem12Report:
    verdict: Theorem12Verdict
    slacks: Dict[str, float]


def check_theorem12(p: ModelParams, chi1: float, chi2: float, n: int, convex: bool) -> Theorem12Report:
    """
    Constant-sensitivity theorem: (i) n = 2, or (ii) convex domain and

        μ1 > nχ1/4,  μ2 > nχ2/4,
        μ1 + a1μ1/2 + a2μ2χ1/(2χ2) > nχ1/2,
        μ2 + a2μ2/2 + a1μ1χ2/χ1    > nχ2/2.

    Slacks are left-hand minus right-hand sides; all must be positive for (ii).
    """
    if chi1 <= 0 or chi2 <= 0:
        raise ParameterError("the constant-sensitivity theorem needs chi1, chi2 > 0")
    if n < 2:
        raise ParameterError(f"spatial dimension must be >= 2, got {n}")
    slacks = {
        "mu1": p.mu1 - n * chi1 / 4.0,
        "mu2": p.mu2 - n * chi2 / 4.0,
        "cross1": p.mu1 + p.a1 * p.mu1 / 2.0 + p.a2 * p.mu2 * chi1 / (2.0 * chi2) - n * chi1 / 2.0,
        "cross2": p.mu2 + p.a2 * p.mu2 / 2.0 + p.a1 * p.mu1 * chi2 / chi1 - n * chi2 / 2.0,
    }
    if n == 2:
        verdict = Theorem12Verdict.CASE_I
    elif convex and all(value > 0 for value in slacks.values()):
        verdict = Theorem12Verdict.CASE_II
    else:
        verdict = Theorem12Verdict.NEITHER
    return Theorem12Report(verdict, slacks)


@dataclass(frozen=True)
class Theorem13Report:
    satisfied: bool
    first_violation: Optional[Dict[str, Any]] = None

    @property
    def verdict(self) -> str:
        return "satisfied-on-grid" if self.satisfied else "violated"


def check_theorem13(spec: SensitivitySpec, p: ModelParams, eta: float, p_exp: float, C_chi: float,
                    sample_grid: Optional[Sequence[float]] = None, n: int = 2) -> Theorem13Report:
    """
    Signal-dependent-sensitivity theorem, checked on a sample grid for i = 1, 2:

        2 d_i d3 χ_i'(w) + ((d3-d_i)p + sqrt((d3-d_i)^2 p^2 + 4 d_i d3 p)) χ_i(w)^2 <= 0
        w χ_i(w) <= C_χ

    The verdict is only ever "on grid".
    """
    grid = DEFAULT_SAMPLE_GRID if sample_grid is None else np.asarray(sample_grid, dtype=float)
    if grid.size == 0:
        raise ParameterError("sample grid is empty")
    if np.any(grid < 0) or np.any(np.diff(grid) < 0):
        raise ParameterError("sample grid must be nonnegative and sorted")
    if p_exp <= n:
        raise ParameterError(f"p must exceed the dimension n={n}, got {p_exp!r}")
    if not 0.0 < eta < 1.0:
        raise ParameterError(f"eta must lie in (0,1), got {eta!r}")

    for i, d_i in ((1, p.d1), (2, p.d2)):
        chi = spec.chi(i, grid)
        dchi = spec.derivative(i, grid)
        spread = (p.d3 - d_i) * p_exp
        kappa = spread + math.sqrt(spread ** 2 + 4.0 * d_i * p.d3 * p_exp)
        lhs = 2.0 * d_i * p.d3 * dchi + kappa * chi ** 2
        scale = 2.0 * d_i * p.d3 * np.abs(dchi) + kappa * chi ** 2
        checks = (
            ("nonnegative", chi < 0, chi),
            ("differential", lhs > 1e-12 * scale, lhs),
            ("decay", grid * chi > C_chi, grid * chi),
        )
        bad = np.zeros(grid.shape, dtype=bool)
        for _, mask, _ in checks:
            bad |= mask
        if np.any(bad):
            k = int(np.argmax(bad))
            which = next(name for name, mask, _ in checks if mask[k])
            value = next(float(vals[k]) for name, _, vals in checks if name == which)
            logger.debug("signal-dependent hypothesis fails for chi%d at w=%g (%s)", i, grid[k], which)
            return Theorem13Report(False, {"i": i, "w": float(grid[k]), "inequality": which, "value": value})
    return Theorem13Report(True)


# ---------------------------------------------------------------------------
# Prior conditions in their parameter-level form
# ---------------------------------------------------------------------------

def _signal_denominator(p: ModelParams, q: float) -> float:
    return p.a1 * p.alpha ** 2 * q + p.a2 * p.beta ** 2 - p.a1 * p.a2 * p.alpha * p.beta * (1.0 + q)


def bai_winkler_condition(p: ModelParams, chi1: float, chi2: float) -> bool:
    """
    Constant-sensitivity lower bounds on μ1, μ2 from the earlier stability result.

    The μ1 bound carries a factor 4 in its denominator so that the pair is
    exactly s + t < f(1); without it the bound reads 4s + t < f(1).
    """
    ss = steady_state(p)
    a = p.a1 * p.a2
    denom = _signal_denominator(p, 1.0)
    mu2_ok = p.mu2 > chi2 ** 2 * ss.v_star * denom / (16.0 * p.d2 * p.d3 * p.a2 * p.gamma * (1.0 - a))
    room = (4.0 * p.a1 * p.gamma * (1.0 - a) * p.d1 * p.d2 * p.d3 / denom
            - p.d1 * p.a1 * chi2 ** 2 * ss.v_star / (4.0 * p.mu2 * p.a2))
    if room <= 0:
        return False
    mu1_ok = p.mu1 > p.d2 * chi1 ** 2 * ss.u_star / (4.0 * room)
    return bool(mu1_ok and mu2_ok)


def mizukami_condition(p: ModelParams, delta1: float) -> bool:
    """Lower bounds on μ1, μ2 for a given δ1 with 4δ1 - a1a2(1+δ1)^2 > 0 (bounds M1, M2 from p)."""
    ss = steady_state(p)
    a = p.a1 * p.a2
    gap = 4.0 * delta1 - a * (1.0 + delta1) ** 2
    if delta1 <= 0 or gap <= 0:
        return False
    num = (1.0 + delta1) * _signal_denominator(p, delta1)
    mu1_ok = p.mu1 > p.M1 ** 2 * ss.u_star * num / (4.0 * p.a1 * p.d1 * p.d3 * p.gamma * gap)
    mu2_ok = p.mu2 > p.M2 ** 2 * ss.v_star * num / (4.0 * p.a2 * p.d2 * p.d3 * p.gamma * gap)
    return bool(mu1_ok and mu2_ok)
