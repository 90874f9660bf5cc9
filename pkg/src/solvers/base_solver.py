# src/solvers/base_solver.py
import math
from abc import ABC, abstractmethod

import numpy as np
from scipy import linalg

from config import SOLVER_CONFIG
from src.errors import BlowUpError, DomainError, ParameterError
from src.logger import setup_logger
from src.model_core import TENSOR_INDEX, ModelParams, derive_scaled
from src.spectral_field import Grid, SpectralOps
from src.solvers.field_state import ETA, N_COMPONENTS, RHO, TAU, U, Trajectory


def stress_divergence_rows(ik):
    """D with (div tau)_i = sum_c D[i, c] tau_c for the six stored components"""
    D = np.zeros((3, 6) + ik.shape[1:], dtype=complex)
    for c, (i, j) in enumerate(TENSOR_INDEX):
        D[i, c] += ik[j]
        if i != j:
            D[j, c] += ik[i]
    return D


def symmetric_gradient_rows(ik):
    """S with (grad u + grad^T u)_c = sum_m S[c, m] u_m"""
    S = np.zeros((6, 3) + ik.shape[1:], dtype=complex)
    for c, (i, j) in enumerate(TENSOR_INDEX):
        S[c, i] += ik[j]
        S[c, j] += ik[i]
    return S


class BaseSolver(ABC):
    """Integrating-factor Heun scheme for dU/dt + A(k) U = N(U) on the periodic box.

    Subclasses provide the per-mode 11x11 operator A(k) and the nonlinear
    terms; the spectral state is an (11, N, N, N) array ordered
    rho, u1..u3, eta, tau_xx, tau_yy, tau_zz, tau_xy, tau_xz, tau_yz.
    """

    def __init__(self, system_name, params: ModelParams, grid: Grid,
                 sources_enabled=True, threads=1, cfl=SOLVER_CONFIG['cfl']):
        self.system_name = system_name
        self.logger = setup_logger(f"{system_name}_solver")
        self.params = params
        self.sp = derive_scaled(params)
        self.grid = grid
        self.ops = SpectralOps(grid, threads)
        self.sources_enabled = sources_enabled
        self.cfl = cfl
        self._operator = None
        self._propagators = {}
        self._cfl_warned = False

    # linear part

    @abstractmethod
    def build_operator(self):
        """(11, 11, N, N, N) array holding A(k) for every mode"""

    @property
    def operator(self):
        """A(k) with the mode axes leading, shape (N, N, N, 11, 11)"""
        if self._operator is None:
            A = self.build_operator()
            self._operator = np.ascontiguousarray(np.moveaxis(A, (0, 1), (-2, -1)))
        return self._operator

    def propagator(self, dt):
        key = float(dt)
        if key not in self._propagators:
            self.logger.info(f"Building {self.grid.n}^3 mode exponentials for dt={key:g}")
            self._propagators[key] = linalg.expm(-key * self.operator)
        return self._propagators[key]

    @staticmethod
    def apply(E, coeffs):
        return np.einsum('xyzij,jxyz->ixyz', E, coeffs)

    # nonlinear part

    @abstractmethod
    def sources(self, fields, coeffs):
        """Spectral nonlinear terms from physical fields and their coefficients"""

    @abstractmethod
    def total_fields(self, fields):
        """(rho, eta) total densities from physical perturbation fields"""

    @abstractmethod
    def velocity(self, fields):
        """Physical (unscaled) velocity"""

    @abstractmethod
    def to_state(self, fields, t):
        """Snapshot object for physical fields"""

    @abstractmethod
    def transfer_residual(self, fields, coeffs):
        """sup-norm of the derivative-transfer identity"""

    def physical(self, coeffs):
        return self.ops.ifft(coeffs)

    def nonlinear(self, coeffs):
        if not self.sources_enabled:
            return np.zeros_like(coeffs)
        fields = self.physical(coeffs)
        return self.ops.dealias(self.sources(fields, coeffs))

    def _check_valid(self, fields, t):
        if not np.all(np.isfinite(fields)):
            raise BlowUpError(f"non-finite values in the {self.system_name} state at t={t:g}", t=t)
        rho, eta = self.total_fields(fields)
        if np.min(rho) <= 0:
            raise BlowUpError(f"density lost positivity at t={t:g} (min {np.min(rho):.3e})", t=t)
        if np.min(eta) <= 0:
            raise BlowUpError(f"polymer density lost positivity at t={t:g} (min {np.min(eta):.3e})", t=t)

    def _check_cfl(self, fields, dt):
        speed = float(np.max(np.abs(self.velocity(fields))))
        if speed > 0 and dt > self.cfl * self.grid.spacing / speed and not self._cfl_warned:
            self.logger.warning(
                f"dt={dt:g} exceeds the advective limit {self.cfl * self.grid.spacing / speed:.3e}")
            self._cfl_warned = True
        return speed * dt / self.grid.spacing

    def step(self, coeffs, dt, t=0.0):
        """One step U* = E(U + dt N(U)), U_new = E U + dt/2 (E N(U) + N(U*))"""
        if not dt > 0:
            raise ParameterError("time step must be positive")
        E = self.propagator(dt)
        try:
            N0 = self.nonlinear(coeffs)
            EU = self.apply(E, coeffs)
            EN0 = self.apply(E, N0)
            N1 = self.nonlinear(EU + dt * EN0)
        except DomainError as e:
            raise BlowUpError(f"{e} during the step from t={t:g}", t=t) from e
        new = EU + 0.5 * dt * (EN0 + N1)
        self._check_valid(self.physical(new), t + dt)
        return new

    # monitors

    def monitor_row(self, coeffs, t, dt=None):
        fields = self.physical(coeffs)
        rho, eta = self.total_fields(fields)
        row = {
            't': t,
            'min_rho': float(np.min(rho)),
            'min_eta': float(np.min(eta)),
            'mean_rho': float(coeffs[RHO, 0, 0, 0].real),
            'mean_eta': float(coeffs[ETA, 0, 0, 0].real),
            'l2_rho': self.ops.norm_m(None, 0, coeffs[RHO]),
            'l2_u': self.ops.norm_m(None, 0, coeffs[U]),
            'l2_eta': self.ops.norm_m(None, 0, coeffs[ETA]),
            'l2_tau': self.ops.norm_m(None, 0, coeffs[TAU]),
            'transfer_residual': self.transfer_residual(fields, coeffs),
        }
        if dt is not None:
            row['cfl'] = self._check_cfl(fields, dt)
        return row

    # driving

    def stack(self, state):
        """Perturbation components of a snapshot in solver order"""
        return state.stacked()

    def initial_coeffs(self, state):
        stacked = self.stack(state)
        if stacked.shape != (N_COMPONENTS,) + self.grid.shape:
            raise ParameterError(f"initial state shaped {stacked.shape} does not fit the grid")
        coeffs = self.ops.fft(stacked)
        self._check_valid(self.physical(coeffs), state.t)
        return coeffs

    def iterate(self, coeffs, dt, n_steps, t0=0.0):
        """Yield (n, t, coeffs) after each step; BlowUpError carries the last valid state"""
        t = t0
        for n in range(1, n_steps + 1):
            try:
                coeffs_new = self.step(coeffs, dt, t)
            except BlowUpError as e:
                e.last_state = self.to_state(self.physical(coeffs), t)
                self.logger.error(f"Aborting {self.system_name} run: {e}")
                raise
            coeffs = coeffs_new
            t = t0 + n * dt
            yield n, t, coeffs

    def simulate(self, initial, dt=SOLVER_CONFIG['dt'], t_end=SOLVER_CONFIG['t_end'],
                 cadence=SOLVER_CONFIG['cadence'], on_snapshot=None, keep_snapshots=True):
        """Run to t_end; snapshots every `cadence` steps and at the end, a monitor row per step"""
        n_steps = step_count(dt, t_end)
        if cadence < 1:
            raise ParameterError("cadence must be at least 1")
        self.logger.info(f"Starting {self.system_name} run: {n_steps} steps of dt={dt:g}")

        trajectory = Trajectory()

        def record(coeffs, t):
            state = self.to_state(self.physical(coeffs), t)
            if keep_snapshots:
                trajectory.snapshots.append(state)
            if on_snapshot is not None:
                on_snapshot(state)

        coeffs = self.initial_coeffs(initial)
        t0 = initial.t
        trajectory.monitors.append(self.monitor_row(coeffs, t0, dt))
        record(coeffs, t0)
        try:
            for n, t, coeffs in self.iterate(coeffs, dt, n_steps, t0):
                trajectory.monitors.append(self.monitor_row(coeffs, t, dt))
                if n % cadence == 0 or n == n_steps:
                    record(coeffs, t)
        except BlowUpError as e:
            e.trajectory = trajectory
            raise

        trajectory.completed = True
        self.logger.info(f"Finished {self.system_name} run at t={t0 + n_steps * dt:g}")
        return trajectory


def step_count(dt, t_end):
    if not dt > 0:
        raise ParameterError("time step must be positive")
    if t_end < 0:
        raise ParameterError("t_end must be nonnegative")
    n_steps = int(round(t_end / dt))
    if not math.isclose(n_steps * dt, t_end, rel_tol=1e-9, abs_tol=1e-12):
        raise ParameterError(f"t_end={t_end:g} is not a multiple of dt={dt:g}")
    return n_steps
