"""
Integrating-factor solver, the original-system oracle and viscosity runs.
"""
import math

import numpy as np
import pytest

from src.errors import BlowUpError, ParameterError
from src.linear_symbol import build_symbol, semigroup
from src.model_core import ModelParams
from src.solvers.base_solver import step_count
from src.solvers.field_state import ETA, N_COMPONENTS, RHO, TAU, U, FieldState
from src.solvers.initial_data import h3_norm, random_initial_data, single_mode_data
from src.solvers.original_solver import (OriginalSystemSolver, equivalence_defect,
                                         matched_initial_state, oracle_original_system,
                                         symmetry_defect)
from src.solvers.reformulated_solver import ReformulatedSolver
from src.solvers.vanishing_viscosity import vanishing_viscosity_experiment
from src.spectral_field import Grid, SpectralOps


@pytest.fixture
def small_state(grid):
    return random_initial_data(grid, seed=7, amplitude=0.5, k_max=2)


class TestInitialData:
    def test_h3_norm_matches_amplitude(self, grid, ops):
        state = random_initial_data(grid, seed=3, amplitude=0.2, k_max=3)
        assert h3_norm(ops, ops.fft(state.stacked())) == pytest.approx(0.2, rel=1e-10)

    def test_seed_reproducible(self, grid):
        a = random_initial_data(grid, seed=11)
        b = random_initial_data(grid, seed=11)
        np.testing.assert_array_equal(a.stacked(), b.stacked())

    def test_means_and_band(self, grid, ops):
        state = random_initial_data(grid, seed=3, amplitude=1.0, k_max=2, means=(1e-3, -2e-3))
        coeffs = ops.fft(state.stacked())
        assert coeffs[RHO, 0, 0, 0].real == pytest.approx(1e-3)
        assert coeffs[ETA, 0, 0, 0].real == pytest.approx(-2e-3)
        outside = grid.k_magnitude > 2 + 1e-9
        assert np.max(np.abs(coeffs[:, outside])) < 1e-14

    def test_component_selection(self, grid):
        state = random_initial_data(grid, seed=1, components=['u'])
        assert np.all(state.rho == 0) and np.all(state.tau == 0)
        assert np.any(state.u != 0)

    @pytest.mark.parametrize("kwargs", [
        {'k_max': 0}, {'k_max': 6}, {'amplitude': 1e-3, 'means': (1.0, 0.0)},
        {'components': ['pressure']},
    ])
    def test_invalid_requests(self, grid, kwargs):
        with pytest.raises(ParameterError):
            random_initial_data(grid, **kwargs)

    def test_single_mode_outside_band(self, grid):
        with pytest.raises(ParameterError):
            single_mode_data(grid, (7, 0, 0), np.ones(N_COMPONENTS))


class TestSources:
    def test_no_velocity(self, params, grid, ops, rng):
        fields = np.zeros((N_COMPONENTS,) + grid.shape)
        fields[RHO] = 0.01 * np.sin(grid.coordinates[0])
        fields[ETA] = 0.01 * np.cos(grid.coordinates[1])
        fields[TAU] = 0.01 * rng.standard_normal((6,) + grid.shape)
        sources = ReformulatedSolver(params, grid).compute_sources(FieldState.from_stacked(fields))
        np.testing.assert_allclose(sources.S1, 0.0, atol=1e-15)
        np.testing.assert_allclose(sources.S3, 0.0, atol=1e-15)
        np.testing.assert_allclose(sources.S4, 0.0, atol=1e-15)

    def test_pure_advection(self, params, grid, ops):
        x = grid.coordinates
        fields = np.zeros((N_COMPONENTS,) + grid.shape)
        fields[U] = 0.1 * np.stack([np.sin(x[1]), np.cos(x[2]), np.sin(x[0])])
        solver = ReformulatedSolver(params, grid)
        sources = solver.compute_sources(FieldState.from_stacked(fields))
        u = fields[U]
        grad_u = np.swapaxes(ops.gradient(u), 0, 1)
        expected = -solver.sp.beta * np.einsum('j...,ij...->i...', u, grad_u)
        expected = ops.ifft(ops.dealias(ops.fft(expected)))
        np.testing.assert_allclose(sources.S2, expected, atol=1e-14)

    def test_divergence_form_sources_have_zero_mean(self, params, grid, small_state):
        sources = ReformulatedSolver(params, grid).compute_sources(small_state)
        assert abs(np.mean(sources.S1)) < 1e-15
        assert abs(np.mean(sources.S3)) < 1e-15


class TestStepping:
    def test_zero_data_stays_zero(self, params, grid):
        solver = ReformulatedSolver(params, grid)
        trajectory = solver.simulate(FieldState.zeros(grid), dt=0.05, t_end=0.25, cadence=1)
        assert trajectory.completed
        for state in trajectory.snapshots:
            assert np.all(state.stacked() == 0)

    def test_linear_mode_follows_semigroup(self, params, sp):
        grid = Grid(8)
        amplitudes = np.zeros(N_COMPONENTS, dtype=complex)
        amplitudes[RHO] = 1.0
        initial = single_mode_data(grid, (1, 0, 0), amplitudes)
        solver = ReformulatedSolver(params, grid, sources_enabled=False)
        trajectory = solver.simulate(initial, dt=0.1, t_end=1.0, cadence=10)
        coeffs = SpectralOps(grid).fft(trajectory.last.stacked())
        M4, _ = build_symbol(1.0, sp, params)
        E = semigroup(M4, 1.0)
        assert coeffs[RHO, 1, 0, 0] == pytest.approx(0.5 * E[0, 0], abs=1e-12)
        assert coeffs[1, 1, 0, 0] == pytest.approx(-0.5j * E[1, 0], abs=1e-12)
        assert coeffs[ETA, 1, 0, 0] == pytest.approx(0.5 * E[2, 0], abs=1e-12)

    def test_t_end_zero_keeps_initial_snapshot(self, params, grid, small_state):
        trajectory = ReformulatedSolver(params, grid).simulate(small_state, dt=0.1, t_end=0.0)
        assert len(trajectory.snapshots) == 1
        assert len(trajectory.monitors) == 1

    def test_cadence(self, params, grid, small_state):
        trajectory = ReformulatedSolver(params, grid).simulate(small_state, dt=0.01, t_end=0.25,
                                                               cadence=10)
        np.testing.assert_allclose(trajectory.times, [0.0, 0.1, 0.2, 0.25])
        assert len(trajectory.monitor_frame()) == 26

    def test_means_conserved(self, params, grid):
        initial = random_initial_data(grid, seed=5, amplitude=0.5, k_max=3, means=(1e-3, 2e-3))
        trajectory = ReformulatedSolver(params, grid).simulate(initial, dt=0.01, t_end=2.0,
                                                               cadence=200)
        monitors = trajectory.monitor_frame()
        assert np.ptp(monitors['mean_rho']) < 1e-11
        assert np.ptp(monitors['mean_eta']) < 1e-11

    def test_stress_stays_symmetric(self, params, grid, small_state):
        _, original = oracle_original_system(params, grid, small_state, dt=0.05, t_end=0.25,
                                             cadence=5)
        assert symmetry_defect(original.last) == 0.0

    def test_self_convergence_order(self, params, grid):
        initial = random_initial_data(grid, seed=9, amplitude=1.0, k_max=2)
        finals = []
        for dt in (0.02, 0.01, 0.005):
            solver = ReformulatedSolver(params, grid)
            finals.append(solver.simulate(initial, dt=dt, t_end=0.2, cadence=1000).last.stacked())
        coarse = np.linalg.norm(finals[0] - finals[1])
        fine = np.linalg.norm(finals[1] - finals[2])
        order = math.log2(coarse / fine)
        assert 1.8 <= order <= 2.5

    def test_transfer_identity(self, params, grid, small_state, ops):
        solver = ReformulatedSolver(params, grid)
        fields = small_state.stacked()
        assert solver.transfer_residual(fields, ops.fft(fields)) < 1e-12

    def test_blow_up_keeps_last_state(self, params, grid, small_state):
        solver = ReformulatedSolver(params, grid)
        solver.nonlinear = lambda coeffs: np.full_like(coeffs, np.nan)
        with pytest.raises(BlowUpError) as info:
            solver.simulate(small_state, dt=0.1, t_end=1.0)
        error = info.value
        assert error.last_state.t == 0.0
        np.testing.assert_allclose(error.last_state.stacked(), small_state.stacked(), atol=1e-14)
        assert len(error.trajectory.snapshots) == 1

    def test_lost_positivity(self, params, grid):
        fields = np.zeros((N_COMPONENTS,) + grid.shape)
        fields[RHO] = -2.0 * np.ones(grid.shape)
        with pytest.raises(BlowUpError):
            ReformulatedSolver(params, grid).simulate(FieldState.from_stacked(fields), dt=0.1,
                                                      t_end=0.1)

    def test_step_count(self):
        assert step_count(0.1, 1.0) == 10
        with pytest.raises(ParameterError):
            step_count(0.3, 1.0)
        with pytest.raises(ParameterError):
            step_count(0.0, 1.0)

    def test_cfl_warning_once(self, params, grid, caplog):
        fields = np.zeros((N_COMPONENTS,) + grid.shape)
        fields[1] = 0.5 * np.sin(grid.coordinates[1])
        solver = ReformulatedSolver(params, grid, cfl=1e-3)
        solver.simulate(FieldState.from_stacked(fields), dt=0.05, t_end=0.1)
        warnings = [r for r in caplog.records if "advective limit" in r.message]
        assert len(warnings) == 1


class TestOriginalSystem:
    def test_matched_state(self, params, sp, small_state):
        original = matched_initial_state(small_state, params, sp)
        np.testing.assert_allclose(original.velocity, sp.beta * small_state.u)
        assert equivalence_defect(small_state, original, params) < 1e-15

    def test_equilibrium_is_stationary(self, params, grid):
        reformulated, original = oracle_original_system(params, grid, FieldState.zeros(grid),
                                                        dt=0.1, t_end=0.5)
        assert np.all(reformulated.last.stacked() == 0)
        diagonal = original.last.T[:3]
        np.testing.assert_allclose(diagonal, params.k * params.eta_bar, atol=1e-15)
        assert max(row['equivalence_defect'] for row in reformulated.monitors) < 1e-15

    @pytest.mark.parametrize("viscous", [False, True])
    def test_equivalence(self, grid, viscous):
        params = ModelParams(mu=0.1, nu=0.1) if viscous else ModelParams()
        initial = random_initial_data(grid, seed=2, amplitude=1e-3, k_max=3)
        reformulated, _ = oracle_original_system(params, grid, initial, dt=0.01, t_end=0.2)
        assert reformulated.monitor_frame()['equivalence_defect'].max() <= 1e-8

    @pytest.mark.slow
    def test_equivalence_full_grid(self):
        grid = Grid(32)
        initial = random_initial_data(grid, seed=2, amplitude=1e-3, k_max=4)
        for params in (ModelParams(), ModelParams(mu=0.1, nu=0.1)):
            reformulated, _ = oracle_original_system(params, grid, initial, dt=0.01, t_end=2.0,
                                                     keep_snapshots=False)
            assert reformulated.monitor_frame()['equivalence_defect'].max() <= 1e-7

    def test_stack_removes_background_stress(self, params, grid):
        solver = OriginalSystemSolver(params, grid)
        state = matched_initial_state(FieldState.zeros(grid), params, solver.sp)
        coeffs = solver.initial_coeffs(state)
        np.testing.assert_allclose(coeffs[TAU], 0.0, atol=1e-15)


class TestVanishingViscosity:
    def test_deviations_decrease(self, params, grid, small_state):
        table = vanishing_viscosity_experiment(params, grid, small_state, [1e-1, 1e-2, 1e-3],
                                               times=(0.5,), dt=0.05)
        deviations = table['deviation'].to_numpy()
        assert list(table['mu']) == [1e-1, 1e-2, 1e-3]
        assert np.all(np.diff(deviations) < 0)
        ratios = table['ratio'].to_numpy()[1:]
        assert np.all((ratios > 0.1 / 3) & (ratios < 0.3))

    @pytest.mark.parametrize("nu_over_mu", [1.0, -0.5])
    def test_bulk_viscosity_follows_mu(self, grid, small_state, nu_over_mu):
        # the configured nu must not survive the sweep
        params = ModelParams(mu=0.1, nu=5.0)
        table = vanishing_viscosity_experiment(params, grid, small_state, [1e-1, 1e-2, 1e-3],
                                               times=(0.5,), dt=0.05, nu_over_mu=nu_over_mu)
        deviations = table['deviation'].to_numpy()
        assert np.all(np.diff(deviations) < 0)
        assert deviations[-1] < 0.3 * deviations[-2]
        assert np.all(table['order'].dropna() > 0.5)

    def test_bulk_viscosity_ratio_must_keep_dissipation(self, params, grid, small_state):
        with pytest.raises(ParameterError):
            vanishing_viscosity_experiment(params, grid, small_state, [1e-2], times=(0.1,),
                                           dt=0.05, nu_over_mu=-1.0)

    def test_zero_viscosity_has_no_deviation(self, params, grid, small_state):
        table = vanishing_viscosity_experiment(params, grid, small_state, [0.0, 1e-2],
                                               times=(0.1,), dt=0.05)
        assert table.loc[table['mu'] == 0.0, 'deviation'].iloc[0] == 0.0

    def test_invalid_inputs(self, params, grid, small_state):
        with pytest.raises(ParameterError):
            vanishing_viscosity_experiment(params, grid, small_state, [-1e-2])
        with pytest.raises(ParameterError):
            vanishing_viscosity_experiment(params, grid, small_state, [1e-2], times=(0.33,), dt=0.1)
