"""
Finite-volume solver for the chemotaxis-competition system on 1D intervals
and 2D rectangles with zero-flux boundaries.

Per step:
- diffusion: 3-point / 5-point stencils in flux form, boundary faces carry
  no flux (same as reflected ghost cells)
- chemotaxis: face flux χ(w_face) ∂w · ρ_donor, donor cell chosen by the
  sign of the face velocity (upwind)
- kinetics: Lotka–Volterra terms and the linear signal source, pointwise

Two schemes: explicit Euler (reference) and IMEX (diffusion implicit via
conjugate gradients, everything else explicit).
"""
from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import cg

from core.model import ChiKind, ModelParams, ParameterError, SensitivitySpec, SteadyState, steady_state

logger = logging.getLogger(__name__)

MIN_CELLS = 8
W_FLOOR = 1e-12
CG_RTOL = 1e-10
NEGATIVE_TOL = 1e-13


class SolverBlowup(RuntimeError):
    """Non-finite or negative values after a step."""

    def __init__(self, step: int, field_name: str, reason: str):
        super().__init__(f"step {step}: field {field_name} {reason}")
        self.step = step
        self.field_name = field_name
        self.reason = reason


class Scheme(Enum):
    EXPLICIT_EULER = "explicit-euler"
    IMEX = "imex"


class InitKind(Enum):
    CONSTANT_PERTURBATION = "constant-perturbation"
    RANDOM = "random"
    FROM_FILE = "from-file"


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centred grid on [0, Lx] or [0, Lx] x [0, Ly]."""

    extents: Tuple[float, ...]
    cells: Tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.extents) not in (1, 2) or len(self.extents) != len(self.cells):
            raise ValueError("grid must be 1D or 2D with one cell count per extent")
        if any(L <= 0 for L in self.extents):
            raise ValueError(f"extents must be positive, got {self.extents}")
        if any(n < MIN_CELLS for n in self.cells):
            raise ValueError(f"need at least {MIN_CELLS} cells per axis, got {self.cells}")

    @staticmethod
    def interval(lx: float, nx: int) -> "Grid":
        return Grid((float(lx),), (int(nx),))

    @staticmethod
    def rectangle(lx: float, ly: float, nx: int, ny: int) -> "Grid":
        return Grid((float(lx), float(ly)), (int(nx), int(ny)))

    @property
    def dimension(self) -> int:
        return len(self.cells)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.cells)

    @property
    def spacings(self) -> Tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.extents, self.cells))

    @property
    def cell_measure(self) -> float:
        return float(np.prod(self.spacings))

    def centers(self) -> Tuple[np.ndarray, ...]:
        """Cell-centre coordinates broadcast to the grid shape."""
        axes = [(np.arange(n) + 0.5) * h for n, h in zip(self.cells, self.spacings)]
        return tuple(np.meshgrid(*axes, indexing="ij"))


@dataclass(frozen=True)
class FieldTriple:
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray

    def __post_init__(self) -> None:
        if not (self.u.shape == self.v.shape == self.w.shape):
            raise ValueError(f"field shapes differ: {self.u.shape}, {self.v.shape}, {self.w.shape}")

    def items(self):
        return (("u", self.u), ("v", self.v), ("w", self.w))

    def matches(self, grid: Grid) -> bool:
        return self.u.shape == grid.shape

    @staticmethod
    def constant(grid: Grid, u: float, v: float, w: float) -> "FieldTriple":
        return FieldTriple(np.full(grid.shape, float(u)), np.full(grid.shape, float(v)),
                           np.full(grid.shape, float(w)))


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    t_end: float
    scheme: Scheme = Scheme.EXPLICIT_EULER
    cfl_safety: float = 0.2
    snapshot_every: int = 10
    cg_rtol: float = CG_RTOL

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if not self.t_end >= 0:
            raise ValueError(f"t_end must be nonnegative, got {self.t_end!r}")
        if not 0.0 < self.cfl_safety <= 1.0:
            raise ValueError(f"cfl_safety must lie in (0,1], got {self.cfl_safety!r}")
        if self.snapshot_every < 1:
            raise ValueError("snapshot_every must be >= 1")


@dataclass(frozen=True)
class InitialData:
    kind: InitKind = InitKind.RANDOM
    amplitude: float = 0.1
    modes: Tuple[int, ...] = (1,)
    seed: int = 0
    floor: float = 1e-6
    source: Optional[FieldTriple] = None

    def __post_init__(self) -> None:
        if self.floor <= 0:
            raise ValueError("initial-data floor must be positive")
        if self.kind is InitKind.FROM_FILE and self.source is None:
            raise ValueError("from-file initial data needs loaded fields")


@dataclass(frozen=True)
class Diagnostics:
    time: float
    du_inf: float
    dv_inf: float
    dw_inf: float
    min_u: float
    min_v: float
    min_w: float
    max_u: float
    max_v: float
    max_w: float
    mass_u: float
    mass_v: float
    mass_w: float
    gradw2: float

    CSV_HEADER = ("time", "du_inf", "dv_inf", "dw_inf", "min_u", "min_v", "min_w",
                  "mass_u", "mass_v", "mass_w", "gradw2")

    def row(self) -> Tuple[float, ...]:
        return tuple(getattr(self, name) for name in self.CSV_HEADER)


@dataclass
class Snapshot:
    step: int
    time: float
    fields: FieldTriple
    diagnostics: Diagnostics


@dataclass
class Trajectory:
    grid: Grid
    snapshots: List[Snapshot] = field(default_factory=list)
    steps: int = 0

    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots])

    def diagnostics(self) -> List[Diagnostics]:
        return [s.diagnostics for s in self.snapshots]

    @property
    def final(self) -> Snapshot:
        return self.snapshots[-1]


# ---------------------------------------------------------------------------
# Discrete operators
# ---------------------------------------------------------------------------

def _lower(x: np.ndarray, axis: int) -> np.ndarray:
    index = [slice(None)] * x.ndim
    index[axis] = slice(None, -1)
    return x[tuple(index)]


def _upper(x: np.ndarray, axis: int) -> np.ndarray:
    index = [slice(None)] * x.ndim
    index[axis] = slice(1, None)
    return x[tuple(index)]


def _face_divergence(face_flux: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Cell divergence of interior face fluxes; boundary faces carry zero flux."""
    pad = [(0, 0)] * face_flux.ndim
    pad[axis] = (1, 1)
    return np.diff(np.pad(face_flux, pad), axis=axis) / h


def laplacian(f: np.ndarray, grid: Grid) -> np.ndarray:
    out = np.zeros_like(f)
    for axis, h in enumerate(grid.spacings):
        out += _face_divergence(np.diff(f, axis=axis) / h, axis, h)
    return out


def _face_sensitivity(spec: SensitivitySpec, i: int, w_face: np.ndarray) -> np.ndarray:
    if spec.kind is ChiKind.RECIPROCAL:
        w_face = np.maximum(w_face, W_FLOOR)
    return spec.chi(i, w_face)


def _face_velocities(w: np.ndarray, spec: SensitivitySpec, i: int, grid: Grid) -> List[np.ndarray]:
    velocities = []
    for axis, h in enumerate(grid.spacings):
        w_face = 0.5 * (_lower(w, axis) + _upper(w, axis))
        velocities.append(_face_sensitivity(spec, i, w_face) * np.diff(w, axis=axis) / h)
    return velocities


def chemotaxis_divergence(rho: np.ndarray, w: np.ndarray, spec: SensitivitySpec, i: int,
                          grid: Grid) -> np.ndarray:
    """∇·(ρ χ_i(w) ∇w) with donor-cell densities."""
    out = np.zeros_like(rho)
    for axis, (h, vel) in enumerate(zip(grid.spacings, _face_velocities(w, spec, i, grid))):
        donor = np.where(vel > 0, _lower(rho, axis), _upper(rho, axis))
        out += _face_divergence(vel * donor, axis, h)
    return out


def integrate(values: np.ndarray, grid: Grid) -> float:
    """Midpoint quadrature (numpy's pairwise summation)."""
    return float(np.sum(values) * grid.cell_measure)


def grad_norm2(w: np.ndarray, grid: Grid) -> float:
    """∫|∇w|^2, centred differences inside, one-sided second order at the boundary."""
    grads = np.gradient(w, *grid.spacings, edge_order=2)
    if grid.dimension == 1:
        grads = [grads]
    return integrate(sum(g ** 2 for g in grads), grid)


@functools.lru_cache(maxsize=32)
def _neumann_laplacian_1d(n: int, h: float) -> sp.csr_matrix:
    main = np.full(n, -2.0)
    main[0] = main[-1] = -1.0
    off = np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / (h * h)


@functools.lru_cache(maxsize=8)
def _laplacian_matrix(grid: Grid) -> sp.csr_matrix:
    if grid.dimension == 1:
        return _neumann_laplacian_1d(grid.cells[0], grid.spacings[0])
    (nx, ny), (hx, hy) = grid.cells, grid.spacings
    return (sp.kron(_neumann_laplacian_1d(nx, hx), sp.identity(ny))
            + sp.kron(sp.identity(nx), _neumann_laplacian_1d(ny, hy))).tocsr()


@functools.lru_cache(maxsize=32)
def _implicit_operator(grid: Grid, coef: float) -> sp.csr_matrix:
    """I - coef·Δ_h; symmetric positive definite on a uniform grid."""
    size = int(np.prod(grid.cells))
    return (sp.identity(size) - coef * _laplacian_matrix(grid)).tocsr()


def _implicit_diffusion(rhs: np.ndarray, coef: float, grid: Grid, rtol: float) -> np.ndarray:
    """
    Solve (I - coef·Δ_h) x = rhs as x = rhs + y with (I - coef·Δ_h) y = coef·Δ_h rhs,
    so the CG tolerance is relative to the diffusive correction, not to rhs.
    """
    if coef == 0:
        return rhs
    b = rhs.ravel()
    correction_rhs = coef * (_laplacian_matrix(grid) @ b)
    if not np.any(correction_rhs):
        return rhs
    y, info = cg(_implicit_operator(grid, coef), correction_rhs, rtol=rtol, atol=0.0)
    if info != 0:
        logger.warning("CG did not reach rtol=%g (info=%d)", rtol, info)
    return (b + y).reshape(rhs.shape)


# ---------------------------------------------------------------------------
# Time stepping
# ---------------------------------------------------------------------------

def cfl_bound(p: ModelParams, spec: SensitivitySpec, grid: Grid, fields: FieldTriple,
              cfg: SolverConfig) -> float:
    """
    cfl_safety / (diffusive + advective + kinetic rates), one shared budget.

    The explicit update keeps the coefficient of each cell's own value at
    1 - dt·(2n·d/h² + 2n·v_max/h + rate) or above, so any cfl_safety in
    (0, 1] keeps u, v, w nonnegative. IMEX drops the diffusive rate: its
    implicit operator is an M-matrix.
    """
    h = min(grid.spacings)
    faces = 2.0 * grid.dimension
    diffusive = 0.0
    if cfg.scheme is Scheme.EXPLICIT_EULER:
        diffusive = faces * max(p.d1, p.d2, p.d3) / (h * h)

    v_max = 0.0
    for i in (1, 2):
        for vel in _face_velocities(fields.w, spec, i, grid):
            if vel.size:
                v_max = max(v_max, float(np.max(np.abs(vel))))
    advective = faces * v_max / h

    load = 1.0 + float(np.max(fields.u)) + float(np.max(fields.v))
    kinetic = max(p.mu1 * load, p.mu2 * load, p.gamma)

    total = diffusive + advective + kinetic
    return cfg.cfl_safety / total if total > 0 else math.inf


def step(fields: FieldTriple, p: ModelParams, spec: SensitivitySpec, grid: Grid, cfg: SolverConfig,
         dt: Optional[float] = None) -> FieldTriple:
    dt = cfg.dt if dt is None else dt
    u, v, w = fields.u, fields.v, fields.w

    explicit_u = -chemotaxis_divergence(u, w, spec, 1, grid) + p.mu1 * u * (1.0 - u - p.a1 * v)
    explicit_v = -chemotaxis_divergence(v, w, spec, 2, grid) + p.mu2 * v * (1.0 - p.a2 * u - v)
    explicit_w = p.alpha * u + p.beta * v - p.gamma * w

    if cfg.scheme is Scheme.EXPLICIT_EULER:
        return FieldTriple(
            u + dt * (p.d1 * laplacian(u, grid) + explicit_u),
            v + dt * (p.d2 * laplacian(v, grid) + explicit_v),
            w + dt * (p.d3 * laplacian(w, grid) + explicit_w),
        )
    return FieldTriple(
        _implicit_diffusion(u + dt * explicit_u, dt * p.d1, grid, cfg.cg_rtol),
        _implicit_diffusion(v + dt * explicit_v, dt * p.d2, grid, cfg.cg_rtol),
        _implicit_diffusion(w + dt * explicit_w, dt * p.d3, grid, cfg.cg_rtol),
    )


def _check_health(fields: FieldTriple, step_index: int) -> None:
    for name, values in fields.items():
        if not np.all(np.isfinite(values)):
            raise SolverBlowup(step_index, name, "became non-finite (CFL violation or instability)")
        low = float(np.min(values))
        if low < -NEGATIVE_TOL * max(1.0, float(np.max(np.abs(values)))):
            raise SolverBlowup(step_index, name, f"went negative (min {low:.3e})")


def _steady_state_or_none(p: ModelParams) -> Optional[SteadyState]:
    try:
        return steady_state(p)
    except ParameterError:
        logger.info("no coexistence state for these constants; distances reported as NaN")
        return None


def diagnose(time: float, fields: FieldTriple, ss: Optional[SteadyState], grid: Grid) -> Diagnostics:
    u, v, w = fields.u, fields.v, fields.w
    if ss is None:
        du = dv = dw = math.nan
    else:
        du = float(np.max(np.abs(u - ss.u_star)))
        dv = float(np.max(np.abs(v - ss.v_star)))
        dw = float(np.max(np.abs(w - ss.w_star)))
    return Diagnostics(
        time=time, du_inf=du, dv_inf=dv, dw_inf=dw,
        min_u=float(u.min()), min_v=float(v.min()), min_w=float(w.min()),
        max_u=float(u.max()), max_v=float(v.max()), max_w=float(w.max()),
        mass_u=integrate(u, grid), mass_v=integrate(v, grid), mass_w=integrate(w, grid),
        gradw2=grad_norm2(w, grid),
    )


def initial_fields(p: ModelParams, grid: Grid, init: InitialData) -> FieldTriple:
    """Perturbations of the coexistence state, relative amplitude, floored."""
    if init.kind is InitKind.FROM_FILE:
        fields = init.source
        if not fields.matches(grid):
            raise ValueError(f"loaded fields have shape {fields.u.shape}, grid is {grid.shape}")
    else:
        ss = steady_state(p)
        if init.kind is InitKind.CONSTANT_PERTURBATION:
            modes = tuple(init.modes) + (init.modes[-1],) * (grid.dimension - len(init.modes))
            profile = np.ones(grid.shape)
            for x, m, L in zip(grid.centers(), modes, grid.extents):
                profile = profile * np.cos(m * math.pi * x / L)
            shapes = (profile, profile, profile)
        else:
            rng = np.random.default_rng(init.seed)
            shapes = tuple(rng.uniform(-1.0, 1.0, grid.shape) for _ in range(3))
        fields = FieldTriple(*(
            np.maximum(base * (1.0 + init.amplitude * shape), init.floor)
            for base, shape in zip(ss.as_tuple(), shapes)
        ))
    for name, values in fields.items():
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError(f"initial {name} must be finite and nonnegative")
    if not np.any(fields.u > 0) or not np.any(fields.v > 0):
        raise ValueError("initial u and v must not vanish identically")
    return fields


def run(p: ModelParams, spec: SensitivitySpec, grid: Grid, cfg: SolverConfig, init: InitialData,
        fields: Optional[FieldTriple] = None) -> Trajectory:
    """Advance to t_end, snapshotting every cfg.snapshot_every steps and at the end."""
    ss = _steady_state_or_none(p)
    fields = initial_fields(p, grid, init) if fields is None else fields
    trajectory = Trajectory(grid)
    trajectory.snapshots.append(Snapshot(0, 0.0, fields, diagnose(0.0, fields, ss, grid)))

    t, n = 0.0, 0
    clipped = False
    logger.info("run: %s scheme, dt=%g, t_end=%g, grid %s", cfg.scheme.value, cfg.dt, cfg.t_end, grid.cells)
    while t < cfg.t_end * (1.0 - 1e-12):
        limit = cfl_bound(p, spec, grid, fields, cfg)
        dt = min(cfg.dt, limit, cfg.t_end - t)
        if limit < cfg.dt and not clipped:
            logger.warning("dt=%g exceeds the stability bound %g at t=%g; clipping", cfg.dt, limit, t)
            clipped = True
        fields = step(fields, p, spec, grid, cfg, dt)
        n += 1
        t += dt
        _check_health(fields, n)
        done = not t < cfg.t_end * (1.0 - 1e-12)
        if n % cfg.snapshot_every == 0 or done:
            trajectory.snapshots.append(Snapshot(n, t, fields, diagnose(t, fields, ss, grid)))
    trajectory.steps = n
    logger.info("run finished after %d steps at t=%g", n, t)
    return trajectory


def ode_reference(p: ModelParams, y0: Sequence[float], t_eval: Sequence[float],
                  rtol: float = 1e-11, atol: float = 1e-13) -> np.ndarray:
    """Spatially homogeneous system (competition kinetics plus signal); shape (3, len(t_eval))."""
    def rhs(_, y):
        u, v, w = y
        return [p.mu1 * u * (1 - u - p.a1 * v),
                p.mu2 * v * (1 - p.a2 * u - v),
                p.alpha * u + p.beta * v - p.gamma * w]

    t_eval = np.asarray(t_eval, dtype=float)
    sol = solve_ivp(rhs, (float(t_eval[0]), float(t_eval[-1])), list(y0), method="DOP853",
                    t_eval=t_eval, rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(f"reference ODE solve failed: {sol.message}")
    return sol.y
