# src/solvers/original_solver.py
import numpy as np

from config import SOLVER_CONFIG
from src.errors import BlowUpError, DomainError
from src.model_core import DIAGONAL, StressTensor, unreformulate_stress
from src.solvers.base_solver import (BaseSolver, step_count, stress_divergence_rows,
                                     symmetric_gradient_rows)
from src.solvers.field_state import ETA, RHO, TAU, U, FieldState, OriginalFieldState, Trajectory
from src.solvers.reformulated_solver import ReformulatedSolver


class OriginalSystemSolver(BaseSolver):
    """Unscaled system in (rho', U, eta', T') with T' = T - k eta_bar I.

    Snapshots expose the total stress T.
    """

    def __init__(self, params, grid, sources_enabled=True, threads=1, **kwargs):
        super().__init__("original", params, grid, sources_enabled, threads, **kwargs)

    def build_operator(self):
        p = self.params
        ik = 1j * self.grid.wavevector
        k2 = self.grid.k_squared
        kk = -ik[:, None] * ik[None, :]
        eye3 = np.eye(3)[:, :, None, None, None]
        eye6 = np.eye(6)[:, :, None, None, None]
        rb, eb = p.rho_bar, p.eta_bar
        k_eta = p.k * eb

        A = np.zeros((11, 11) + self.grid.shape, dtype=complex)
        A[RHO, U] = rb * ik
        A[U, RHO] = p.pressure_derivative(rb) / rb * ik
        A[U, U] = (p.mu * k2 * eye3 + (p.mu + p.nu) * kk) / rb
        A[U, ETA] = (p.k * p.L + 2.0 * p.z * eb) / rb * ik
        A[U, TAU] = -stress_divergence_rows(ik) / rb
        A[ETA, U] = eb * ik
        A[ETA, ETA] = p.eps * k2
        A[TAU, U] = -k_eta * symmetric_gradient_rows(ik)
        A[TAU, TAU] = (p.damping + p.eps * k2) * eye6
        for c in DIAGONAL:
            A[5 + c, U] += k_eta * ik
            A[5 + c, ETA] = -p.damping * p.k
        return A

    def sources(self, fields, coeffs):
        p, ops = self.params, self.ops
        rho_p, vel, eta_p, stress = fields[RHO], fields[U], fields[ETA], fields[TAU]
        rho = rho_p + p.rho_bar
        if np.any(rho <= 0):
            raise DomainError("rho' + rho_bar must stay positive")

        grad_rho = ops.ifft(ops.spectral_gradient(coeffs[RHO]))
        grad_eta = ops.ifft(ops.spectral_gradient(coeffs[ETA]))
        grad_U = np.swapaxes(ops.ifft(ops.spectral_gradient(coeffs[U])), 0, 1)
        div_T = ops.ifft(ops.spectral_tensor_divergence(coeffs[TAU]))

        S_rho = -ops.spectral_divergence(ops.fft(rho_p * vel))

        pressure_gap = p.pressure_derivative(rho) / rho - p.pressure_derivative(p.rho_bar) / p.rho_bar
        inverse_gap = 1.0 / rho - 1.0 / p.rho_bar
        S_U = (-np.einsum('j...,ij...->i...', vel, grad_U)
               - pressure_gap * grad_rho
               + inverse_gap * (div_T - (p.k * p.L + 2.0 * p.z * p.eta_bar) * grad_eta)
               - 2.0 * p.z * eta_p * grad_eta / rho)
        if p.viscous:
            lap_U = ops.ifft(-self.grid.k_squared * coeffs[U])
            grad_div_U = ops.ifft(ops.spectral_gradient(ops.spectral_divergence(coeffs[U])))
            S_U = S_U + inverse_gap * (p.mu * lap_U + (p.mu + p.nu) * grad_div_U)

        S_eta = -ops.spectral_divergence(ops.fft(eta_p * vel))

        flux = ops.fft(vel[:, None] * stress[None])
        advected = np.sum(1j * self.grid.wavevector[:, None] * flux, axis=0)
        stretch = np.einsum('il...,lj...->ij...', grad_U, StressTensor(stress).matrix())
        S_T = -advected + ops.fft(
            StressTensor.from_matrix(stretch + np.swapaxes(stretch, 0, 1)).components)

        return np.concatenate([S_rho[None], ops.fft(S_U), S_eta[None], S_T])

    def stack(self, state: OriginalFieldState):
        stacked = state.stacked().copy()
        stacked[TAU][list(DIAGONAL)] -= self.params.k * self.params.eta_bar
        return stacked

    def total_fields(self, fields):
        return fields[RHO] + self.params.rho_bar, fields[ETA] + self.params.eta_bar

    def velocity(self, fields):
        return fields[U]

    def to_state(self, fields, t):
        state = OriginalFieldState.from_stacked(fields, t)
        state.T[list(DIAGONAL)] += self.params.k * self.params.eta_bar
        return state

    def transfer_residual(self, fields, coeffs):
        """sup |div U + (rho_t + U.grad rho) / rho|"""
        p, ops = self.params, self.ops
        div_hat = ops.spectral_divergence(coeffs[U])
        rho_t_hat = -p.rho_bar * div_hat
        if self.sources_enabled:
            rho_t_hat = rho_t_hat - ops.dealias(ops.spectral_divergence(ops.fft(fields[RHO] * fields[U])))
        grad_rho = ops.ifft(ops.spectral_gradient(coeffs[RHO]))
        advect = np.sum(fields[U] * grad_rho, axis=0)
        residual = ops.ifft(div_hat) + (ops.ifft(rho_t_hat) + advect) / (fields[RHO] + p.rho_bar)
        return float(np.max(np.abs(residual)))


def matched_initial_state(state: FieldState, params, sp) -> OriginalFieldState:
    """(rho', U = beta u, eta', T = tau + k (eta' + eta_bar) I)"""
    T = unreformulate_stress(state.tau, state.eta + params.eta_bar, params).components
    return OriginalFieldState(state.rho.copy(), sp.beta * state.u, state.eta.copy(), T, state.t)


def equivalence_defect(state: FieldState, original: OriginalFieldState, params):
    """sup |T - (tau + k (eta' + eta_bar) I)|"""
    expected = unreformulate_stress(state.tau, state.eta + params.eta_bar, params).components
    return float(np.max(np.abs(original.T - expected)))


def symmetry_defect(original: OriginalFieldState):
    """sup |T - T^T| of the expanded stress"""
    full = StressTensor(original.T).matrix()
    return float(np.max(np.abs(full - np.swapaxes(full, 0, 1))))


def oracle_original_system(params, grid, initial: FieldState, dt=SOLVER_CONFIG['dt'],
                           t_end=SOLVER_CONFIG['t_end'], cadence=SOLVER_CONFIG['cadence'],
                           sources_enabled=True, threads=1, keep_snapshots=True):
    """Integrate both systems in lockstep from matched data.

    Returns (reformulated, original) trajectories; the reformulated monitor
    rows carry the equivalence defect at every step.
    """
    solver = ReformulatedSolver(params, grid, sources_enabled, threads)
    oracle = OriginalSystemSolver(params, grid, sources_enabled, threads)
    n_steps = step_count(dt, t_end)

    reformulated, original = Trajectory(), Trajectory()
    c_ref = solver.initial_coeffs(initial)
    c_orig = oracle.initial_coeffs(matched_initial_state(initial, params, solver.sp))

    def record(n, t, c_ref, c_orig):
        state = solver.to_state(solver.physical(c_ref), t)
        other = oracle.to_state(oracle.physical(c_orig), t)
        row = solver.monitor_row(c_ref, t, dt)
        row['equivalence_defect'] = equivalence_defect(state, other, params)
        reformulated.monitors.append(row)
        original.monitors.append(oracle.monitor_row(c_orig, t, dt))
        if keep_snapshots and (n % cadence == 0 or n == n_steps):
            reformulated.snapshots.append(state)
            original.snapshots.append(other)

    t0 = initial.t
    record(0, t0, c_ref, c_orig)
    steps = zip(solver.iterate(c_ref, dt, n_steps, t0), oracle.iterate(c_orig, dt, n_steps, t0))
    try:
        for (n, t, c_ref), (_, _, c_orig) in steps:
            record(n, t, c_ref, c_orig)
    except BlowUpError as e:
        e.trajectory = reformulated
        raise

    reformulated.completed = original.completed = True
    worst = max(row['equivalence_defect'] for row in reformulated.monitors)
    solver.logger.info(f"Equivalence defect over {n_steps} steps: {worst:.3e}")
    return reformulated, original
