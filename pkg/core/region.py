"""
Stability-region geometry in the (s, t) plane

The sufficient conditions for convergence to the coexistence state all read
"the rescaled sensitivity pair (s, t) lies in some region":

- Bai–Winkler:  s + t < f(1)
- Mizukami:     max(s, t) < f(q0)/(1+q0),  q0 = argmax f(q)/(1+q)
- new:          s + q t < f(q) for some q ∈ I

with I = {q > 0 | 4q - (1+q)^2 a1 a2 > 0} and

    f(q) = γ (4q - (1+q)^2 a1a2) / (a1 α^2 q + a2 β^2 - a1 a2 α β (1+q)).

The union over q is decided numerically: a log-uniform grid over I (always
containing q = 1 and q0) followed by golden-section refinement. The closed
form of the union (discriminant plus vertex-in-I conditions) is kept as an
independent cross-check.
"""
from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from core.model import ModelParams, steady_state
from core.quadform import QuadForm3

logger = logging.getLogger(__name__)

GRID_POINTS = 2048
GOLDEN_TOL = 1e-12
BOUNDARY_TOL = 1e-12
FD_STEP = 1e-5

INV_PHI = (math.sqrt(5) - 1) / 2  # 1 / phi
INV_PHI_SQUARE = (3 - math.sqrt(5)) / 2  # 1 / phi^2


class RegionError(ValueError):
    """Arguments outside the domain where the region functions are defined."""


class ConditionViolated(ValueError):
    """No q ∈ I gives the rescaled point a positive margin."""


class InclusionSearchFailed(RuntimeError):
    """No point separating the improved region from the Bai–Winkler one was found."""


@dataclass(frozen=True)
class RegionParams:
    a1: float
    a2: float
    alpha: float
    beta: float
    gamma: float

    def __post_init__(self) -> None:
        if not (0.0 < self.a1 < 1.0 and 0.0 < self.a2 < 1.0):
            raise RegionError(f"a1, a2 must lie in (0,1), got a1={self.a1!r}, a2={self.a2!r}")
        if min(self.alpha, self.beta, self.gamma) <= 0:
            raise RegionError("alpha, beta, gamma must be positive")

    @property
    def a(self) -> float:
        return self.a1 * self.a2

    @staticmethod
    def from_model(p: ModelParams) -> "RegionParams":
        return RegionParams(p.a1, p.a2, p.alpha, p.beta, p.gamma)


@dataclass(frozen=True)
class RegionPoint:
    s: float
    t: float

    def __post_init__(self) -> None:
        if not (self.s >= 0 and self.t >= 0):
            raise RegionError(f"region points need s, t >= 0, got ({self.s!r}, {self.t!r})")


@dataclass(frozen=True)
class Membership:
    inside: bool
    margin: float
    q: Optional[float] = None

    def __bool__(self) -> bool:
        return self.inside


@dataclass(frozen=True)
class Witness:
    """A q ∈ I with positive margin together with an admissible δ."""

    q: float
    delta: float
    margin: float


# ---------------------------------------------------------------------------
# I, f, g
# ---------------------------------------------------------------------------

def interval_I(rp: RegionParams) -> Tuple[float, float]:
    """Roots of a q^2 + (2a - 4) q + a = 0, a = a1 a2; their product is 1."""
    a = rp.a
    if not 0.0 < a < 1.0:
        raise RegionError(f"a1*a2 = {a!r} leaves I empty")
    q_plus = ((2.0 - a) + 2.0 * math.sqrt(1.0 - a)) / a
    # q_minus from the product of the roots avoids cancellation as a -> 0
    return 1.0 / q_plus, q_plus


def _denominator(rp: RegionParams, q):
    return (rp.a1 * rp.alpha ** 2 * q + rp.a2 * rp.beta ** 2
            - rp.a * rp.alpha * rp.beta * (1.0 + q))


def f_of_q(rp: RegionParams, q):
    """f on the closure of I; vectorised over q."""
    q_arr = np.asarray(q, dtype=float)
    q_minus, q_plus = interval_I(rp)
    if np.any(q_arr < q_minus * (1.0 - 1e-12)) or np.any(q_arr > q_plus * (1.0 + 1e-12)):
        raise RegionError(f"q outside the closure of I = ({q_minus!r}, {q_plus!r})")
    den = _denominator(rp, q_arr)
    if np.any(den <= 0):
        raise RegionError("signal denominator must stay positive on I")
    num = rp.gamma * np.maximum(4.0 * q_arr - (1.0 + q_arr) ** 2 * rp.a, 0.0)
    out = num / den
    return float(out) if out.ndim == 0 else out


def g_of_q(rp: RegionParams, q):
    q_arr = np.asarray(q, dtype=float)
    out = np.asarray(f_of_q(rp, q_arr)) / q_arr
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# One-dimensional search
# ---------------------------------------------------------------------------

def golden_section_max(func: Callable[[float], float], lo: float, hi: float,
                       tol: float = GOLDEN_TOL) -> float:
    """
    Golden-section search for the maximiser of a unimodal func on [lo, hi].
    tol is relative to the bracket's upper end.
    """
    a, b = min(lo, hi), max(lo, hi)
    h = b - a
    abs_tol = tol * max(abs(b), 1.0)
    if h <= abs_tol:
        return 0.5 * (a + b)

    n = int(math.ceil(math.log(abs_tol / h) / math.log(INV_PHI)))
    c = a + INV_PHI_SQUARE * h
    d = a + INV_PHI * h
    yc = func(c)
    yd = func(d)
    for _ in range(n - 1):
        if yc > yd:
            b, d, yd = d, c, yc
            h = INV_PHI * h
            c = a + INV_PHI_SQUARE * h
            yc = func(c)
        else:
            a, c, yc = c, d, yd
            h = INV_PHI * h
            d = a + INV_PHI * h
            yd = func(d)
    return 0.5 * (a + d) if yc > yd else 0.5 * (c + b)


def _log_grid(rp: RegionParams, points: int = GRID_POINTS) -> np.ndarray:
    q_minus, q_plus = interval_I(rp)
    return np.exp(np.linspace(math.log(q_minus), math.log(q_plus), points + 2)[1:-1])


def _refine(func: Callable[[float], float], grid: np.ndarray, values: np.ndarray,
            rp: RegionParams, tol: float) -> Tuple[float, float]:
    """Refine the grid argmax between its neighbours; returns (argmax, max)."""
    q_minus, q_plus = interval_I(rp)
    k = int(np.argmax(values))
    lo = grid[k - 1] if k > 0 else q_minus
    hi = grid[k + 1] if k + 1 < grid.size else q_plus
    q_best = golden_section_max(func, lo, hi, tol)
    v_best = float(func(q_best))
    if v_best < values[k]:
        return float(grid[k]), float(values[k])
    return float(q_best), v_best


def _maximize(rp: RegionParams, func: Callable, tol: float) -> Tuple[float, float]:
    grid = _log_grid(rp)
    return _refine(func, grid, np.asarray(func(grid)), rp, tol)


def q0_maximizer(rp: RegionParams, tol: float = GOLDEN_TOL) -> float:
    """argmax over I of f(q)/(1+q)."""
    q0, _ = _maximize(rp, lambda q: f_of_q(rp, q) / (1.0 + q), tol)
    return q0


def f_maximizer(rp: RegionParams, tol: float = GOLDEN_TOL) -> Tuple[float, float]:
    return _maximize(rp, lambda q: f_of_q(rp, q), tol)


def g_maximizer(rp: RegionParams, tol: float = GOLDEN_TOL) -> Tuple[float, float]:
    return _maximize(rp, lambda q: g_of_q(rp, q), tol)


@functools.lru_cache(maxsize=64)
def _miz_square(rp: RegionParams) -> Tuple[float, float]:
    """q0 and the side f(q0)/(1+q0) of the square max(s,t) < side."""
    q0 = q0_maximizer(rp)
    return q0, float(f_of_q(rp, q0)) / (1.0 + q0)


@functools.lru_cache(maxsize=64)
def _q_grid(rp: RegionParams) -> Tuple[np.ndarray, np.ndarray]:
    """Search grid over I with q = 1 and q0 inserted, and f on it."""
    q = np.union1d(_log_grid(rp), [1.0, _miz_square(rp)[0]])
    fq = np.asarray(f_of_q(rp, q))
    q.setflags(write=False)
    fq.setflags(write=False)
    return q, fq


# ---------------------------------------------------------------------------
# Membership
# ---------------------------------------------------------------------------

def _membership(margin: float, q: Optional[float] = None) -> Membership:
    # the defining inequalities are strict
    return Membership(bool(margin > BOUNDARY_TOL), float(margin), None if q is None else float(q))


def in_region_bw(rp: RegionParams, pt: RegionPoint) -> Membership:
    return _membership(f_of_q(rp, 1.0) - pt.s - pt.t, 1.0)


def in_region_miz(rp: RegionParams, pt: RegionPoint) -> Membership:
    q0, side = _miz_square(rp)
    return _membership(side - max(pt.s, pt.t), q0)


def in_region_miz_union(rp: RegionParams, pt: RegionPoint) -> Membership:
    """Union over the grid of q of the squares max(s,t) < f(q)/(1+q)."""
    q, fq = _q_grid(rp)
    side = fq / (1.0 + q)
    k = int(np.argmax(side))
    return _membership(float(side[k]) - max(pt.s, pt.t), float(q[k]))


def in_region_new(rp: RegionParams, pt: RegionPoint, tol: float = GOLDEN_TOL) -> Membership:
    """Exists q ∈ I with s + q t < f(q); margin = max over I of f(q) - s - q t."""
    q, fq = _q_grid(rp)
    values = fq - pt.s - q * pt.t
    q_best, margin = _refine(lambda x: f_of_q(rp, x) - pt.s - x * pt.t, q, values, rp, tol)
    return _membership(margin, q_best)


def h1(rp: RegionParams, s, t, printed: bool = False):
    """
    Discriminant of the quadratic-in-q inequality behind the union.
    printed=True keeps the extra factor γ on the 2 a2 β^2 t term as it was
    typeset; that version only agrees with the union when γ = 1.
    """
    a1, a2, al, be, ga, a = rp.a1, rp.a2, rp.alpha, rp.beta, rp.gamma, rp.a
    P = a1 * al * (al - a2 * be)
    Q = a2 * be * (be - a1 * al)
    s_coef = 2 * a1 * al ** 2 - 2 * a * al * be + a1 * a2 ** 2 * be ** 2 - a1 ** 2 * a2 * al ** 2
    lead = 2 * a2 * be ** 2 * (ga if printed else 1.0)
    t_coef = lead - 2 * a * al * be + a1 ** 2 * a2 * al ** 2 - a1 * a2 ** 2 * be ** 2
    return (P ** 2 * s ** 2 + Q ** 2 * t ** 2 - 2 * P * Q * s * t
            - 4 * ga * s_coef * s - 4 * ga * t_coef * t + 16 * ga ** 2 * (1 - a))


def h2(rp: RegionParams, s, t, sign: int):
    """Vertex-position functions; h2(+) > 0 and h2(-) < 0 put the optimal q inside I."""
    a1, a2, al, be, ga, a = rp.a1, rp.a2, rp.alpha, rp.beta, rp.gamma, rp.a
    root = math.sqrt(1 - a)
    t_coef = al * (4 - 2 * a + sign * 4 * root) * (al - a2 * be) / a2 + a2 * be * (be - a1 * al)
    return a1 * al * (al - a2 * be) * s + t_coef * t + sign * 4 * ga * root


def closed_form_membership(rp: RegionParams, pt: RegionPoint, printed: bool = False) -> bool:
    s, t = pt.s, pt.t
    excess = rp.a2 * rp.beta - rp.alpha
    t_cap = rp.a2 * rp.gamma / (rp.alpha * excess) if excess > 0 else math.inf
    return bool(s >= 0 and 0 <= t < t_cap
                and h1(rp, s, t, printed) > 0
                and h2(rp, s, t, +1) > 0
                and h2(rp, s, t, -1) < 0)


# ---------------------------------------------------------------------------
# From model constants to a witness
# ---------------------------------------------------------------------------

def point_from_params(p: ModelParams) -> RegionPoint:
    ss = steady_state(p)
    s = ss.u_star * p.M1 ** 2 / (4.0 * p.d1 * p.d3 * p.a1 * p.mu1)
    t = ss.v_star * p.M2 ** 2 / (4.0 * p.d2 * p.d3 * p.a2 * p.mu2)
    return RegionPoint(s, t)


def delta_interval(p: ModelParams, q: float) -> Tuple[float, float]:
    """Open interval of δ making both the I1 form and the gradient term dissipative."""
    ss = steady_state(p)
    rp = RegionParams.from_model(p)
    penalty = (ss.u_star * p.a2 * p.mu2 * p.M1 ** 2 / (4.0 * p.d1)
               + ss.v_star * q * p.a1 * p.mu1 * p.M2 ** 2 / (4.0 * p.d2))
    upper = p.a1 * p.mu1 * p.a2 * p.mu2 * f_of_q(rp, q)
    return penalty / p.d3, upper


def dissipation_form(p: ModelParams, q: float, delta: float) -> QuadForm3:
    """Quadratic form of the non-gradient part of dE/dt (sign flipped)."""
    m = p.mu1 * p.mu2
    return QuadForm3(
        a=p.a2 * m,
        b=p.a1 * p.a2 * m * (1.0 + q),
        c=-delta * p.alpha,
        d=p.a1 * m * q,
        e=-delta * p.beta,
        f=delta * p.gamma,
    )


def select_q_delta(p: ModelParams) -> Witness:
    p.check_stability_regime()
    rp = RegionParams.from_model(p)
    pt = point_from_params(p)
    membership = in_region_new(rp, pt)
    if not membership.inside:
        raise ConditionViolated(
            f"condition s + q t < f(q) violated for every q in I: (s, t) = ({pt.s:.6g}, {pt.t:.6g}), "
            f"best margin {membership.margin:.3g}")
    lower, upper = delta_interval(p, membership.q)
    delta = math.sqrt(lower * upper) if lower > 0 else 0.5 * upper
    logger.debug("witness q=%g delta=%g in (%g, %g)", membership.q, delta, lower, upper)
    return Witness(membership.q, delta, membership.margin)


# ---------------------------------------------------------------------------
# Why q = 1 is not optimal
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DerivativeReport:
    """
    f'(1), g'(1): exact values, central differences, and the values of the
    typeset closed forms, which lack the positive factors a2 β (for f) and
    a1 α (for g) but share their signs.
    """

    df_at_1: float
    dg_at_1: float
    df_fd: float
    dg_fd: float
    df_printed: float
    dg_printed: float

    def as_tuple(self) -> Tuple[float, float]:
        return self.df_at_1, self.dg_at_1


def derivative_checks(rp: RegionParams, step: float = FD_STEP) -> DerivativeReport:
    a1, a2, al, be, ga, a = rp.a1, rp.a2, rp.alpha, rp.beta, rp.gamma, rp.a
    den_sq = (a1 * al ** 2 + a2 * be ** 2 - 2 * a * al * be) ** 2
    scale = 4 * ga * (1 - a) / den_sq
    return DerivativeReport(
        df_at_1=scale * a2 * be * (be - a1 * al),
        dg_at_1=scale * a1 * al * (a2 * be - al),
        df_fd=(f_of_q(rp, 1 + step) - f_of_q(rp, 1 - step)) / (2 * step),
        dg_fd=(g_of_q(rp, 1 + step) - g_of_q(rp, 1 - step)) / (2 * step),
        df_printed=scale * (be - a1 * al),
        dg_printed=scale * (a2 * be - al),
    )


def classify_case(rp: RegionParams) -> str:
    """'case-2' when a1α = β or a2β = α, else 'case-1-1' / 'case-1-2'."""
    if math.isclose(rp.a1 * rp.alpha, rp.beta, rel_tol=1e-12) or \
            math.isclose(rp.a2 * rp.beta, rp.alpha, rel_tol=1e-12):
        return "case-2"
    q, fq = _q_grid(rp)
    f1 = f_of_q(rp, 1.0)
    better = (fq > f1 * (1 + 1e-12)) & (fq / q > f1 * (1 + 1e-12))
    return "case-1-1" if np.any(better) else "case-1-2"


def strict_inclusion_witness(rp: RegionParams) -> RegionPoint:
    """
    A point of the new region outside the Bai–Winkler one, on whichever axis
    the best q gains most over q = 1 (midway between the two intercepts).
    """
    f1 = f_of_q(rp, 1.0)
    _, f_best = f_maximizer(rp)
    _, g_best = g_maximizer(rp)
    gain_s, gain_t = f_best - f1, g_best - f1
    if gain_s >= gain_t:
        pt = RegionPoint(f1 + 0.5 * gain_s, 0.0)
    else:
        pt = RegionPoint(0.0, f1 + 0.5 * gain_t)
    if not (in_region_new(rp, pt).inside and not in_region_bw(rp, pt).inside):
        raise InclusionSearchFailed(f"strict inclusion search failed for {rp}")
    return pt
