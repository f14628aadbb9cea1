"""Exponential decay rates fitted to diagnostic time series: value ≈ C e^{-ell t}."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import linregress

from core.solver import Diagnostics

logger = logging.getLogger(__name__)

MIN_SAMPLES = 8
LOG_FLOOR = 10.0 * np.finfo(float).eps
R2_THRESHOLD = 0.9
# total log change below this over the window counts as flat
FLAT_TOL = 1e-12
DEFAULT_WINDOW = (0.25, 0.9)
CERTIFIED_FIELDS = ("du_inf", "dv_inf", "dw_inf")
RATE_HEADER = ("field", "ell", "C", "r2", "t_start", "t_end")


@dataclass(frozen=True)
class RateEstimate:
    ell: float
    C: float
    r2: float
    window: Tuple[float, float]
    samples: int
    note: str = ""

    def row(self, field: str):
        return (field, self.ell, self.C, self.r2, self.window[0], self.window[1])


@dataclass(frozen=True)
class Certification:
    field: str
    certified: bool
    estimate: Optional[RateEstimate]
    note: str = ""
    ratio_to_eps: Optional[float] = None


def fit_rate(times: Sequence[float], values: Sequence[float],
             window: Optional[Tuple[float, float]] = None) -> RateEstimate:
    """Least squares on log(value) against time, restricted to the closed time window."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.shape != values.shape or times.ndim != 1:
        raise ValueError("times and values must be 1D arrays of equal length")
    if window is None:
        window = (float(times.min()), float(times.max())) if times.size else (0.0, 0.0)
    t0, t1 = window
    in_window = (times >= t0) & (times <= t1)
    if np.any(values[in_window] < 0) or not np.all(np.isfinite(values[in_window])):
        raise ValueError("values must be finite and nonnegative inside the window")
    usable = in_window & (values > LOG_FLOOR)
    n = int(np.count_nonzero(usable))
    if n < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} usable samples in [{t0:g}, {t1:g}], got {n}")

    fit = linregress(times[usable], np.log(values[usable]))
    ell = -float(fit.slope)
    span = float(np.ptp(times[usable]))
    if abs(ell) * span < FLAT_TOL:
        ell = 0.0
    note = "no decay" if ell <= 0 else ""
    return RateEstimate(ell=ell, C=math.exp(fit.intercept), r2=float(fit.rvalue) ** 2,
                        window=(t0, t1), samples=n, note=note)


def window_times(times: Sequence[float], fractions: Tuple[float, float] = DEFAULT_WINDOW) -> Tuple[float, float]:
    a, b = fractions
    if not 0.0 <= a < b <= 1.0:
        raise ValueError(f"window fractions must satisfy 0 <= a < b <= 1, got {fractions}")
    start, end = float(times[0]), float(times[-1])
    span = end - start
    return start + a * span, start + b * span


def certify(diagnostics: Sequence[Diagnostics], threshold_ell: float,
            window: Tuple[float, float] = DEFAULT_WINDOW,
            eps: Optional[float] = None) -> Dict[str, Certification]:
    """
    Per sup-norm distance: certified iff the fitted ell exceeds threshold_ell
    with r2 > 0.9 on the fractional window. A series already at the roundoff
    floor throughout the window is certified vacuously.
    """
    times = np.array([d.time for d in diagnostics])
    if times.size < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} diagnostic samples, got {times.size}")
    t_window = window_times(times, window)
    in_window = (times >= t_window[0]) & (times <= t_window[1])

    results: Dict[str, Certification] = {}
    for name in CERTIFIED_FIELDS:
        values = np.array([getattr(d, name) for d in diagnostics])
        if np.all(values[in_window] <= LOG_FLOOR):
            results[name] = Certification(name, True, None, "vacuous: already converged")
            continue
        try:
            estimate = fit_rate(times, values, t_window)
        except ValueError as exc:
            logger.warning("%s: no rate fitted (%s)", name, exc)
            results[name] = Certification(name, False, None, str(exc))
            continue
        ok = estimate.ell > threshold_ell and estimate.r2 > R2_THRESHOLD
        ratio = estimate.ell / eps if eps else None
        results[name] = Certification(name, ok, estimate, estimate.note, ratio)
        logger.info("%s: ell=%.6g C=%.3g r2=%.6f -> %s", name, estimate.ell, estimate.C,
                    estimate.r2, "certified" if ok else "not certified")
    return results
