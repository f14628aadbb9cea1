import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent
sys.path.insert(0, str(ROOT))

from core.model import ModelParams, SensitivitySpec  # noqa: E402
from core.region import RegionParams  # noqa: E402
from core.solver import Grid, InitialData, InitKind, Scheme, SolverConfig, run  # noqa: E402


def symmetric_model(**overrides) -> ModelParams:
    """a1 = a2 = 1/2, α = β = γ = 1, unit diffusivities and rates."""
    values = dict(d1=1.0, d2=1.0, d3=1.0, mu1=1.0, mu2=1.0, a1=0.5, a2=0.5,
                  alpha=1.0, beta=1.0, gamma=1.0, M1=0.0, M2=0.0)
    values.update(overrides)
    return ModelParams(**values)


@pytest.fixture
def symmetric_params() -> ModelParams:
    return symmetric_model()


@pytest.fixture
def symmetric_rp() -> RegionParams:
    return RegionParams(0.5, 0.5, 1.0, 1.0, 1.0)


@pytest.fixture
def unit_interval() -> Grid:
    return Grid.interval(1.0, 16)


@pytest.fixture(scope="session")
def in_region_run():
    """μ = 5, constant χ = 0.1, 1D N = 128, random amplitude 0.1, IMEX to t = 20."""
    p = symmetric_model(mu1=5.0, mu2=5.0, M1=0.1, M2=0.1)
    spec = SensitivitySpec.constant(0.1, 0.1)
    grid = Grid.interval(1.0, 128)
    cfg = SolverConfig(dt=0.01, t_end=20.0, scheme=Scheme.IMEX, snapshot_every=10)
    init = InitialData(kind=InitKind.RANDOM, amplitude=0.1, seed=7)
    return p, spec, grid, run(p, spec, grid, cfg, init)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long simulations, deselect with -m 'not slow'")
