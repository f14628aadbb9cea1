import math

import numpy as np
import pytest

from conftest import symmetric_model
from core.model import SensitivitySpec, steady_state
from core.solver import (FieldTriple, Grid, InitialData, InitKind, Scheme, SolverBlowup, SolverConfig,
                         cfl_bound, chemotaxis_divergence, diagnose, grad_norm2, initial_fields, integrate,
                         laplacian, ode_reference, run, step)

NO_CHEMOTAXIS = SensitivitySpec.constant(0.0, 0.0)


def inert_model(**overrides):
    """Every rate zero unless overridden; a1, a2 only keep the steady state defined."""
    values = dict(d1=0.0, d2=0.0, d3=0.0, mu1=0.0, mu2=0.0, alpha=0.0, beta=0.0, gamma=0.0)
    values.update(overrides)
    return symmetric_model(**values)


class TestGrid:
    def test_rejects_coarse_grids(self):
        with pytest.raises(ValueError):
            Grid.interval(1.0, 4)
        with pytest.raises(ValueError):
            Grid((1.0, 1.0, 1.0), (8, 8, 8))

    def test_centers(self):
        (x,) = Grid.interval(2.0, 8).centers()
        np.testing.assert_allclose(x, (np.arange(8) + 0.5) * 0.25)
        x, y = Grid.rectangle(1.0, 2.0, 8, 16).centers()
        assert x.shape == y.shape == (8, 16)
        assert y[0, 1] == pytest.approx(0.1875)


class TestOperators:
    def test_laplacian_of_constants_and_boundary_flux(self, unit_interval):
        assert not np.any(laplacian(np.full(16, 3.0), unit_interval))
        x = unit_interval.centers()[0]
        assert integrate(laplacian(x ** 2, unit_interval), unit_interval) == pytest.approx(0.0, abs=1e-12)

    def test_cosine_is_an_eigenvector(self):
        grid = Grid.interval(1.0, 32)
        x = grid.centers()[0]
        h = grid.spacings[0]
        eig = 4.0 / h ** 2 * math.sin(math.pi * h / 2) ** 2
        np.testing.assert_allclose(laplacian(np.cos(math.pi * x), grid), -eig * np.cos(math.pi * x), atol=1e-10)

    def test_chemotaxis_conserves_mass_in_2d(self):
        grid = Grid.rectangle(1.0, 1.5, 12, 10)
        x, y = grid.centers()
        rho = 1.0 + 0.5 * np.sin(3 * x) * np.cos(2 * y)
        w = np.exp(x - y)
        div = chemotaxis_divergence(rho, w, SensitivitySpec.constant(2.0, 2.0), 1, grid)
        assert integrate(div, grid) == pytest.approx(0.0, abs=1e-12)

    def test_grad_norm2_of_linear_signal(self, unit_interval):
        x = unit_interval.centers()[0]
        assert grad_norm2(3.0 * x, unit_interval) == pytest.approx(9.0)


class TestHandComputedSteps:
    grid = Grid.interval(8.0, 8)
    cfg = SolverConfig(dt=0.1, t_end=1.0)

    def spike(self):
        u = np.zeros(8)
        u[3] = 1.0
        return u

    def test_diffusion(self):
        fields = FieldTriple(self.spike(), np.zeros(8), np.zeros(8))
        out = step(fields, inert_model(d1=1.0), NO_CHEMOTAXIS, self.grid, self.cfg)
        expected = np.zeros(8)
        expected[2:5] = [0.1, 0.8, 0.1]
        np.testing.assert_allclose(out.u, expected, atol=1e-15)

    def test_upwind_transport(self):
        fields = FieldTriple(self.spike(), np.zeros(8), np.arange(8.0))
        out = step(fields, inert_model(), SensitivitySpec.constant(1.0, 1.0), self.grid, self.cfg)
        expected = np.zeros(8)
        expected[3:5] = [0.9, 0.1]
        np.testing.assert_allclose(out.u, expected, atol=1e-15)

    def test_signal_source(self):
        fields = FieldTriple.constant(self.grid, 1.0, 2.0, 4.0)
        out = step(fields, inert_model(alpha=1.0, beta=0.5, gamma=0.25), NO_CHEMOTAXIS, self.grid, self.cfg)
        np.testing.assert_allclose(out.w, 4.0 + 0.1 * (1.0 + 1.0 - 1.0))


class TestInvariants:
    def test_steady_state_is_preserved_explicit(self, symmetric_params):
        grid = Grid.interval(1.0, 16)
        ss = steady_state(symmetric_params)
        fields = FieldTriple.constant(grid, *ss.as_tuple())
        traj = run(symmetric_params, SensitivitySpec.constant(1.0, 1.0), grid,
                   SolverConfig(dt=1e-4, t_end=1.0, snapshot_every=1000), InitialData(), fields)
        assert traj.steps == pytest.approx(10_000, abs=1)
        final = traj.final.diagnostics
        assert max(final.du_inf, final.dv_inf, final.dw_inf) < 1e-12

    def test_steady_state_is_preserved_imex(self, symmetric_params):
        grid = Grid.rectangle(1.0, 1.0, 12, 12)
        ss = steady_state(symmetric_params)
        fields = FieldTriple.constant(grid, *ss.as_tuple())
        traj = run(symmetric_params, SensitivitySpec.reciprocal(1.0, 1.0), grid,
                   SolverConfig(dt=0.01, t_end=10.0, scheme=Scheme.IMEX, snapshot_every=100),
                   InitialData(), fields)
        final = traj.final.diagnostics
        assert max(final.du_inf, final.dv_inf, final.dw_inf) < 1e-12

    @pytest.mark.parametrize("scheme", list(Scheme))
    def test_constants_stay_constant(self, scheme, symmetric_params):
        grid = Grid.interval(1.0, 16)
        fields = FieldTriple.constant(grid, 0.3, 0.9, 2.0)
        traj = run(symmetric_params, SensitivitySpec.constant(1.0, 1.0), grid,
                   SolverConfig(dt=1e-3, t_end=0.5, scheme=scheme), InitialData(), fields)
        for _, values in traj.final.fields.items():
            assert np.ptp(values) <= 1e-12

    def test_mass_is_conserved_without_kinetics(self):
        grid = Grid.interval(1.0, 32)
        x = grid.centers()[0]
        fields = FieldTriple(1.0 + 0.3 * np.cos(2 * math.pi * x), 1.0 + 0.2 * np.cos(math.pi * x),
                             1.0 + 0.5 * np.cos(math.pi * x))
        p = inert_model(d1=1.0, d2=1.0, d3=1.0)
        traj = run(p, SensitivitySpec.constant(1.0, 1.0), grid,
                   SolverConfig(dt=5e-5, t_end=0.05, snapshot_every=100), InitialData(), fields)
        first, last = traj.snapshots[0].diagnostics, traj.final.diagnostics
        for name in ("mass_u", "mass_v", "mass_w"):
            assert getattr(last, name) == pytest.approx(getattr(first, name), rel=1e-12)
        assert math.isnan(last.du_inf)
        assert last.min_u > 0 and last.min_v > 0

    def test_positivity_under_strong_chemotaxis(self):
        grid = Grid.interval(1.0, 64)
        p = symmetric_model(mu1=1.0, mu2=1.0)
        traj = run(p, SensitivitySpec.constant(5.0, 5.0), grid,
                   SolverConfig(dt=0.01, t_end=1.0, scheme=Scheme.IMEX),
                   InitialData(kind=InitKind.CONSTANT_PERTURBATION, amplitude=0.5, modes=(2,)))
        assert all(d.min_u >= 0 and d.min_v >= 0 for d in traj.diagnostics())


class TestTimeStepping:
    def test_cfl_bound_cases(self, symmetric_params):
        grid = Grid.interval(1.0, 10)
        spec = SensitivitySpec.constant(1.0, 1.0)
        zero = FieldTriple.constant(grid, 0.0, 0.0, 0.0)
        explicit = SolverConfig(dt=1.0, t_end=1.0)
        imex = SolverConfig(dt=1.0, t_end=1.0, scheme=Scheme.IMEX)
        # rates: diffusion 2/h² = 200, kinetics 1, transport 2·|∇w|/h
        assert cfl_bound(symmetric_params, spec, grid, zero, explicit) == pytest.approx(0.2 / 201)
        assert cfl_bound(symmetric_params, spec, grid, zero, imex) == pytest.approx(0.2)
        steep = FieldTriple(zero.u, zero.v, 1000.0 * grid.centers()[0])
        assert cfl_bound(symmetric_params, spec, grid, steep, explicit) == pytest.approx(0.2 / 20201)
        square = Grid.rectangle(1.0, 1.0, 10, 10)
        flat = FieldTriple.constant(square, 0.0, 0.0, 0.0)
        assert cfl_bound(symmetric_params, spec, square, flat, explicit) == pytest.approx(0.2 / 401)
        assert cfl_bound(inert_model(d1=1.0), NO_CHEMOTAXIS, grid, zero, explicit) == pytest.approx(0.005 * 0.2)

    def test_nan_fields_leave_dt_alone(self, symmetric_params, unit_interval):
        fields = FieldTriple.constant(unit_interval, 0.5, 0.5, 1.0)
        fields.u[2] = math.nan
        imex = SolverConfig(dt=1.0, t_end=1.0, scheme=Scheme.IMEX)
        assert cfl_bound(symmetric_params, NO_CHEMOTAXIS, unit_interval, fields, imex) == math.inf

    @pytest.mark.parametrize("grid", [Grid.interval(1.0, 40), Grid.rectangle(1.0, 2.0, 12, 20)],
                             ids=["1d", "2d"])
    @pytest.mark.parametrize("seed", range(5))
    def test_full_budget_step_stays_nonnegative(self, grid, seed):
        rng = np.random.default_rng(seed)
        u, v, w = (rng.uniform(0.0, 2.0, grid.shape) for _ in range(3))
        u[rng.random(grid.shape) < 0.3] = 0.0
        v[rng.random(grid.shape) < 0.3] = 0.0
        fields = FieldTriple(u, v, 5.0 * w)
        p = symmetric_model(d2=2.0, mu1=3.0, mu2=0.5, gamma=4.0)
        spec = SensitivitySpec.constant(5.0, 2.0)
        cfg = SolverConfig(dt=1.0, t_end=1.0, cfl_safety=1.0)
        out = step(fields, p, spec, grid, cfg, cfl_bound(p, spec, grid, fields, cfg))
        for _, values in out.items():
            assert values.min() >= -1e-12

    def test_full_budget_run_keeps_strong_chemotaxis_positive(self):
        grid = Grid.interval(1.0, 64)
        p = symmetric_model()
        traj = run(p, SensitivitySpec.constant(5.0, 5.0), grid,
                   SolverConfig(dt=0.01, t_end=0.5, cfl_safety=1.0, snapshot_every=500),
                   InitialData(kind=InitKind.CONSTANT_PERTURBATION, amplitude=0.5, modes=(2,)))
        assert traj.final.time == pytest.approx(0.5)
        assert all(min(d.min_u, d.min_v, d.min_w) >= 0 for d in traj.diagnostics())

    def test_dt_is_clipped_and_logged(self, symmetric_params, caplog):
        grid = Grid.interval(1.0, 16)
        traj = run(symmetric_params, NO_CHEMOTAXIS, grid, SolverConfig(dt=0.1, t_end=0.05),
                   InitialData(seed=3))
        assert traj.steps > 1
        assert traj.final.time == pytest.approx(0.05)
        assert "clipping" in caplog.text

    def test_snapshot_schedule(self, symmetric_params):
        grid = Grid.interval(1.0, 16)
        traj = run(symmetric_params, NO_CHEMOTAXIS, grid,
                   SolverConfig(dt=0.01, t_end=0.25, scheme=Scheme.IMEX, snapshot_every=10), InitialData())
        assert [s.step for s in traj.snapshots] == [0, 10, 20, 25]
        assert traj.times()[-1] == pytest.approx(0.25)

    def test_zero_end_time(self, symmetric_params, unit_interval):
        traj = run(symmetric_params, NO_CHEMOTAXIS, unit_interval, SolverConfig(dt=0.01, t_end=0.0),
                   InitialData())
        assert traj.steps == 0
        assert len(traj.snapshots) == 1

    def test_blowup_names_step_and_field(self, symmetric_params, unit_interval):
        fields = FieldTriple.constant(unit_interval, 0.5, 0.5, 1.0)
        fields.u[4] = math.nan
        with pytest.raises(SolverBlowup) as info:
            run(symmetric_params, NO_CHEMOTAXIS, unit_interval, SolverConfig(dt=1e-3, t_end=1.0),
                InitialData(), fields)
        assert info.value.step == 1
        assert info.value.field_name == "u"


class TestInitialData:
    def test_random_is_seeded(self, symmetric_params, unit_interval):
        a = initial_fields(symmetric_params, unit_interval, InitialData(seed=5))
        b = initial_fields(symmetric_params, unit_interval, InitialData(seed=5))
        c = initial_fields(symmetric_params, unit_interval, InitialData(seed=6))
        np.testing.assert_array_equal(a.u, b.u)
        assert not np.array_equal(a.u, c.u)

    def test_perturbation_is_relative(self, symmetric_params, unit_interval):
        fields = initial_fields(symmetric_params, unit_interval,
                                InitialData(kind=InitKind.CONSTANT_PERTURBATION, amplitude=0.1))
        ss = steady_state(symmetric_params)
        x = unit_interval.centers()[0]
        np.testing.assert_allclose(fields.w, ss.w_star * (1 + 0.1 * np.cos(math.pi * x)))

    def test_floor(self, symmetric_params, unit_interval):
        fields = initial_fields(symmetric_params, unit_interval,
                                InitialData(kind=InitKind.CONSTANT_PERTURBATION, amplitude=3.0, floor=1e-3))
        assert fields.u.min() == pytest.approx(1e-3)

    def test_rejects_mismatched_source(self, symmetric_params, unit_interval):
        source = FieldTriple.constant(Grid.interval(1.0, 8), 1.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            initial_fields(symmetric_params, unit_interval, InitialData(kind=InitKind.FROM_FILE, source=source))

    def test_rejects_vanishing_species(self, symmetric_params, unit_interval):
        source = FieldTriple.constant(unit_interval, 0.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            initial_fields(symmetric_params, unit_interval, InitialData(kind=InitKind.FROM_FILE, source=source))


class TestAccuracy:
    def test_signal_equation_converges_at_second_order(self):
        # w = 2 + cos(πx) is steady when αu = 2γ + (γ + π²) cos(πx) and u is frozen
        gamma = 20.0
        p = inert_model(d3=1.0, alpha=1.0, gamma=gamma)
        errors = []
        for n in (16, 32, 64):
            grid = Grid.interval(1.0, n)
            x = grid.centers()[0]
            exact = 2.0 + np.cos(math.pi * x)
            u = 2.0 * gamma + (gamma + math.pi ** 2) * np.cos(math.pi * x)
            fields = FieldTriple(u, np.zeros(n), exact.copy())
            traj = run(p, NO_CHEMOTAXIS, grid, SolverConfig(dt=0.05, t_end=2.0, scheme=Scheme.IMEX,
                                                          snapshot_every=1000), InitialData(), fields)
            errors.append(float(np.max(np.abs(traj.final.fields.w - exact))))
        assert errors[0] / errors[1] == pytest.approx(4.0, rel=0.05)
        assert errors[1] / errors[2] == pytest.approx(4.0, rel=0.05)

    def test_homogeneous_run_is_euler_on_the_ode(self):
        p = symmetric_model()
        grid = Grid.interval(8.0, 8)
        y0 = (0.2, 0.9, 0.5)
        traj = run(p, SensitivitySpec.constant(1.0, 1.0), grid, SolverConfig(dt=1e-3, t_end=1.0, snapshot_every=100),
                   InitialData(), FieldTriple.constant(grid, *y0))

        u, v, w = y0
        t = 0.0
        while t < 1.0 * (1.0 - 1e-12):
            dt = min(1e-3, 1.0 - t)
            u, v, w = (u + dt * (p.mu1 * u * (1.0 - u - p.a1 * v)),
                       v + dt * (p.mu2 * v * (1.0 - p.a2 * u - v)),
                       w + dt * (p.alpha * u + p.beta * v - p.gamma * w))
            t += dt
        final = traj.final.fields
        np.testing.assert_allclose(final.u, u, rtol=1e-13)
        np.testing.assert_allclose(final.v, v, rtol=1e-13)
        np.testing.assert_allclose(final.w, w, rtol=1e-13)

    def test_homogeneous_run_approaches_the_ode_at_first_order(self):
        p = symmetric_model()
        grid = Grid.interval(8.0, 8)
        y0 = (0.2, 0.9, 0.5)
        reference = ode_reference(p, y0, [0.0, 1.0])[:, -1]
        errors = []
        for dt in (1e-3, 5e-4):
            traj = run(p, NO_CHEMOTAXIS, grid, SolverConfig(dt=dt, t_end=1.0, snapshot_every=10_000),
                       InitialData(), FieldTriple.constant(grid, *y0))
            final = traj.final.fields
            errors.append(max(abs(final.u[0] - reference[0]), abs(final.v[0] - reference[1]),
                              abs(final.w[0] - reference[2])))
        assert errors[0] < 1e-2
        assert errors[0] / errors[1] == pytest.approx(2.0, rel=0.1)

    @pytest.mark.slow
    def test_homogeneous_run_tracks_the_ode_to_t20(self):
        p = symmetric_model()
        grid = Grid.interval(8.0, 8)
        y0 = (0.2, 0.9, 0.5)
        traj = run(p, NO_CHEMOTAXIS, grid, SolverConfig(dt=1e-4, t_end=20.0, snapshot_every=10_000),
                   InitialData(), FieldTriple.constant(grid, *y0))
        times = traj.times()
        assert times[-1] == pytest.approx(20.0)
        reference = ode_reference(p, y0, times)
        errors = [max(abs(s.fields.u[0] - ref[0]), abs(s.fields.v[0] - ref[1]), abs(s.fields.w[0] - ref[2]))
                  for s, ref in zip(traj.snapshots, reference.T)]
        # global Euler error at dt = 1e-4 peaks near 1e-5 during the transient
        assert max(errors) < 3e-5
        assert errors[-1] < 1e-6

    def test_converges_without_chemotaxis(self, symmetric_params):
        grid = Grid.interval(1.0, 32)
        traj = run(symmetric_params, NO_CHEMOTAXIS, grid,
                   SolverConfig(dt=0.05, t_end=60.0, scheme=Scheme.IMEX, snapshot_every=100),
                   InitialData(seed=11))
        final = traj.final.fields
        np.testing.assert_allclose(final.u, 2 / 3, atol=1e-6)
        np.testing.assert_allclose(final.v, 2 / 3, atol=1e-6)
        np.testing.assert_allclose(final.w, 4 / 3, atol=1e-6)

    def test_in_region_run_converges(self, in_region_run):
        _, _, _, traj = in_region_run
        final = traj.final.diagnostics
        assert traj.final.time == pytest.approx(20.0)
        assert max(final.du_inf, final.dv_inf, final.dw_inf) < 1e-6


def test_diagnose_distances(symmetric_params, unit_interval):
    ss = steady_state(symmetric_params)
    fields = FieldTriple.constant(unit_interval, ss.u_star + 0.1, ss.v_star - 0.2, ss.w_star)
    d = diagnose(1.5, fields, ss, unit_interval)
    assert (d.du_inf, d.dv_inf, d.dw_inf) == pytest.approx((0.1, 0.2, 0.0))
    assert d.mass_w == pytest.approx(ss.w_star)
    assert d.gradw2 == pytest.approx(0.0, abs=1e-25)
    assert len(d.row()) == len(d.CSV_HEADER)
