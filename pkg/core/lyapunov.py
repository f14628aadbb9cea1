"""
Discrete energy functional

    E = a2 μ2 A + q a1 μ1 B + δ C

    A = ∫ u - u* - u* log(u/u*)
    B = ∫ v - v* - v* log(v/v*)
    C = ½ ∫ (w - w*)^2

and the decay inequality dE/dt <= -ε (∫(u-u*)^2 + ∫(v-v*)^2 + ∫(w-w*)^2 + ∫|∇w|^2)
checked along sampled trajectories with ε = min(ε1, ε2).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence

import numpy as np

from core.model import ModelParams, SteadyState, steady_state
from core.quadform import HypothesisFailed, max_margin
from core.region import Witness, delta_interval, dissipation_form
from core.solver import FieldTriple, Grid, Trajectory, grad_norm2, integrate

logger = logging.getLogger(__name__)

ENERGY_HEADER = ("time", "A", "B", "C", "E", "dist_u2", "dist_v2", "dist_w2", "grad_w2", "E_rate")


class EnergyError(ValueError):
    """Energy undefined (nonpositive density) or witness inconsistent with the constants."""


@dataclass(frozen=True)
class EnergyRecord:
    time: float
    A: float
    B: float
    C: float
    E: float
    dist_u2: float
    dist_v2: float
    dist_w2: float
    grad_w2: float
    E_rate: Optional[float] = None

    @property
    def dissipation(self) -> float:
        return self.dist_u2 + self.dist_v2 + self.dist_w2 + self.grad_w2

    def row(self):
        return tuple(getattr(self, name) for name in ENERGY_HEADER)


@dataclass(frozen=True)
class DissipationConstants:
    eps1: float
    eps2: float

    @property
    def eps(self) -> float:
        return min(self.eps1, self.eps2)


@dataclass(frozen=True)
class DecayReport:
    checked: int
    fraction_satisfied: float
    worst_violation: float
    worst_time: Optional[float] = None


@dataclass(frozen=True)
class MonotonicityReport:
    nonincreasing: bool
    violations: int
    worst_increase: float


def _relative_entropy(values: np.ndarray, star: float) -> np.ndarray:
    # star * (x - log(1 + x)), x = values/star - 1; log1p keeps precision near equilibrium
    x = values / star - 1.0
    return np.maximum(star * (x - np.log1p(x)), 0.0)


def _require_positive(name: str, values: np.ndarray) -> None:
    bad = np.argwhere(~(values > 0))
    if bad.size:
        cell = tuple(int(i) for i in bad[0])
        raise EnergyError(f"{name} must be positive for the energy, got {values[cell]!r} at cell {cell}")


def energy(fields: FieldTriple, ss: SteadyState, witness: Witness, p: ModelParams, grid: Grid,
           time: float = 0.0) -> EnergyRecord:
    if not fields.matches(grid):
        raise EnergyError(f"fields of shape {fields.u.shape} do not match grid {grid.shape}")
    _require_positive("u", fields.u)
    _require_positive("v", fields.v)

    A = integrate(_relative_entropy(fields.u, ss.u_star), grid)
    B = integrate(_relative_entropy(fields.v, ss.v_star), grid)
    dw = fields.w - ss.w_star
    C = 0.5 * integrate(dw ** 2, grid)
    E = p.a2 * p.mu2 * A + witness.q * p.a1 * p.mu1 * B + witness.delta * C
    return EnergyRecord(
        time=time, A=A, B=B, C=C, E=E,
        dist_u2=integrate((fields.u - ss.u_star) ** 2, grid),
        dist_v2=integrate((fields.v - ss.v_star) ** 2, grid),
        dist_w2=integrate(dw ** 2, grid),
        grad_w2=grad_norm2(fields.w, grid),
    )


def trajectory_energy(trajectory: Trajectory, p: ModelParams, witness: Witness) -> List[EnergyRecord]:
    """Energy at every snapshot; E_rate by backward differences from the second sample on."""
    ss = steady_state(p)
    records: List[EnergyRecord] = []
    for snap in trajectory.snapshots:
        record = energy(snap.fields, ss, witness, p, trajectory.grid, snap.time)
        if records:
            prev = records[-1]
            record = replace(record, E_rate=(record.E - prev.E) / (record.time - prev.time))
        records.append(record)
    return records


def dissipation_constants(p: ModelParams, w: Witness) -> DissipationConstants:
    try:
        eps1 = max_margin(dissipation_form(p, w.q, w.delta))
    except HypothesisFailed as exc:
        raise EnergyError(f"witness q={w.q:g}, delta={w.delta:g} leaves the dissipation form indefinite") from exc
    penalty, _ = delta_interval(p, w.q)
    eps2 = p.d3 * (w.delta - penalty)
    if not (eps1 > 0 and eps2 > 0):
        raise EnergyError(f"nonpositive dissipation constants eps1={eps1:g}, eps2={eps2:g}")
    return DissipationConstants(eps1, eps2)


def _check_times(records: Sequence[EnergyRecord]) -> None:
    times = np.array([r.time for r in records])
    if np.any(np.diff(times) <= 0):
        raise EnergyError("energy records must be in strictly increasing time order")


def verify_decay(records: Sequence[EnergyRecord], dc: DissipationConstants, slack: float = 0.1) -> DecayReport:
    """
    Check E_rate <= -eps·D·(1 - slack) + slack·|E_rate| at every sample that
    carries a rate, D being the sum of squared distances and ∫|∇w|^2.

    worst_violation is normalised by eps·D + |E_rate| and is <= 0 when every
    sample passes.
    """
    if len(records) < 3:
        raise EnergyError(f"need at least 3 energy samples, got {len(records)}")
    if slack < 0:
        raise ValueError(f"slack must be nonnegative, got {slack!r}")
    _check_times(records)

    rated = [r for r in records if r.E_rate is not None]
    if not rated:
        raise EnergyError("no sample carries an energy rate")
    passed = 0
    worst, worst_time = -math.inf, None
    for r in rated:
        bound = -dc.eps * r.dissipation * (1.0 - slack) + slack * abs(r.E_rate)
        excess = r.E_rate - bound
        scale = dc.eps * r.dissipation + abs(r.E_rate)
        normalised = excess / scale if scale > 0 else excess
        if excess <= 0:
            passed += 1
        if normalised > worst:
            worst, worst_time = normalised, r.time
    report = DecayReport(len(rated), passed / len(rated), worst, worst_time)
    logger.info("decay inequality holds at %d/%d samples (worst %.3g at t=%s)",
                passed, len(rated), worst, worst_time)
    return report


def energy_nonincreasing(records: Sequence[EnergyRecord], skip: float = 0.01,
                         atol: float = 1e-12) -> MonotonicityReport:
    """E(t_{k+1}) <= E(t_k) + atol after skipping the first `skip` fraction of samples."""
    if not 0.0 <= skip < 1.0:
        raise ValueError(f"skip must lie in [0,1), got {skip!r}")
    _check_times(records)
    values = np.array([r.E for r in records])[int(math.ceil(skip * len(records))):]
    increases = np.diff(values)
    violations = int(np.count_nonzero(increases > atol))
    worst = float(increases.max()) if increases.size else 0.0
    return MonotonicityReport(violations == 0, violations, worst)
