# src/solvers/reformulated_solver.py
import numpy as np

from src.model_core import StressTensor, g_fn, h_fn
from src.solvers.base_solver import BaseSolver, stress_divergence_rows, symmetric_gradient_rows
from src.solvers.field_state import ETA, RHO, TAU, U, FieldState, SourceTerms


class ReformulatedSolver(BaseSolver):
    """Scaled perturbation system for (rho', u, eta', tau) with u = U / beta"""

    def __init__(self, params, grid, sources_enabled=True, threads=1, **kwargs):
        super().__init__("reformulated", params, grid, sources_enabled, threads, **kwargs)

    def build_operator(self):
        sp, p = self.sp, self.params
        ik = 1j * self.grid.wavevector
        k2 = self.grid.k_squared
        kk = -ik[:, None] * ik[None, :]
        eye3 = np.eye(3)[:, :, None, None, None]
        eye6 = np.eye(6)[:, :, None, None, None]
        bk = sp.beta * p.k * p.eta_bar

        A = np.zeros((11, 11) + self.grid.shape, dtype=complex)
        A[RHO, U] = sp.r1 * ik
        A[U, RHO] = sp.r1 * ik
        A[U, U] = sp.mu1 * k2 * eye3 + sp.mu2 * kk
        A[U, ETA] = sp.r2 * ik
        A[U, TAU] = -sp.r3 * stress_divergence_rows(ik)
        A[ETA, U] = sp.beta * p.eta_bar * ik
        A[ETA, ETA] = p.eps * k2
        A[TAU, U] = -bk * symmetric_gradient_rows(ik)
        A[TAU, TAU] = (p.damping + p.eps * k2) * eye6
        return A

    def sources(self, fields, coeffs):
        sp, p, ops = self.sp, self.params, self.ops
        beta = sp.beta
        rho, u, eta, tau = fields[RHO], fields[U], fields[ETA], fields[TAU]

        grad_rho = ops.ifft(ops.spectral_gradient(coeffs[RHO]))
        grad_eta = ops.ifft(ops.spectral_gradient(coeffs[ETA]))
        grad_u = np.swapaxes(ops.ifft(ops.spectral_gradient(coeffs[U])), 0, 1)
        div_tau = ops.ifft(ops.spectral_tensor_divergence(coeffs[TAU]))
        h = h_fn(rho, sp, p)
        g = g_fn(rho, sp, p)

        S1 = -beta * ops.spectral_divergence(ops.fft(rho * u))

        c_eta = p.k * (p.L - 1.0) + 2.0 * p.z * p.eta_bar
        S2 = (-beta * np.einsum('j...,ij...->i...', u, grad_u)
              + h * grad_rho
              + g * (c_eta * grad_eta - div_tau)
              - 2.0 * p.z / (beta * (rho + p.rho_bar)) * eta * grad_eta)
        if p.viscous:
            lap_u = ops.ifft(-self.grid.k_squared * coeffs[U])
            grad_div_u = ops.ifft(ops.spectral_gradient(ops.spectral_divergence(coeffs[U])))
            S2 = S2 - beta * g * (p.mu * lap_u + (p.mu + p.nu) * grad_div_u)

        S3 = -beta * ops.spectral_divergence(ops.fft(eta * u))

        flux = ops.fft(u[:, None] * tau[None])
        advected = np.sum(1j * self.grid.wavevector[:, None] * flux, axis=0)
        stretch = np.einsum('il...,lj...->ij...', grad_u, StressTensor(tau).matrix())
        sym_grad = grad_u + np.swapaxes(grad_u, 0, 1)
        local = beta * (stretch + np.swapaxes(stretch, 0, 1)) + beta * p.k * eta * sym_grad
        S4 = -beta * advected + ops.fft(StressTensor.from_matrix(local).components)

        return np.concatenate([S1[None], ops.fft(S2), S3[None], S4])

    def compute_sources(self, state: FieldState) -> SourceTerms:
        """Dealiased S1..S4 in physical space (S2 includes the viscous terms when mu or nu != 0)"""
        coeffs = self.ops.fft(state.stacked())
        physical = self.ops.ifft(self.ops.dealias(self.sources(state.stacked(), coeffs)))
        return SourceTerms(physical[RHO], physical[U], physical[ETA], physical[TAU])

    def total_fields(self, fields):
        return fields[RHO] + self.params.rho_bar, fields[ETA] + self.params.eta_bar

    def velocity(self, fields):
        return self.sp.beta * fields[U]

    def to_state(self, fields, t):
        return FieldState.from_stacked(fields, t)

    def transfer_residual(self, fields, coeffs):
        """sup |div u + (rho_t + beta u.grad rho) / (r1 + beta rho)|"""
        sp, ops = self.sp, self.ops
        div_u_hat = ops.spectral_divergence(coeffs[U])
        rho_t_hat = -sp.r1 * div_u_hat
        if self.sources_enabled:
            rho_t_hat = rho_t_hat - sp.beta * ops.dealias(
                ops.spectral_divergence(ops.fft(fields[RHO] * fields[U])))
        grad_rho = ops.ifft(ops.spectral_gradient(coeffs[RHO]))
        advect = sp.beta * np.sum(fields[U] * grad_rho, axis=0)
        residual = ops.ifft(div_u_hat) + (ops.ifft(rho_t_hat) + advect) / (sp.r1 + sp.beta * fields[RHO])
        return float(np.max(np.abs(residual)))
