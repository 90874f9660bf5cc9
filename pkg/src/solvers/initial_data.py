# src/solvers/initial_data.py
import math

import numpy as np

from config import DEFAULT_SEED, SOLVER_CONFIG
from src.errors import ParameterError
from src.spectral_field import SpectralOps
from src.solvers.field_state import ETA, N_COMPONENTS, RHO, TAU, U, FieldState

COMPONENT_GROUPS = {'rho': RHO, 'u': U, 'eta': ETA, 'tau': TAU}


def h3_norm(ops: SpectralOps, coeffs):
    """sqrt of sum_m<=3 ||nabla^m f||^2 over every component"""
    return math.sqrt(sum(ops.norm_m(None, m, coeffs) ** 2 for m in range(4)))


def random_initial_data(grid, seed=DEFAULT_SEED, amplitude=SOLVER_CONFIG['amplitude'],
                        k_max=SOLVER_CONFIG['k_max'], means=(0.0, 0.0), components=None,
                        threads=1) -> FieldState:
    """Seeded band-limited fields with H^3 norm `amplitude` and zero modes `means` for (rho', eta')"""
    if not 1 <= k_max <= grid.n / 3.0:
        raise ParameterError(f"k_max must lie in [1, N/3], got {k_max}")
    if not amplitude >= 0:
        raise ParameterError("amplitude must be nonnegative")
    ops = SpectralOps(grid, threads)
    rng = np.random.default_rng(seed)

    coeffs = ops.fft(rng.standard_normal((N_COMPONENTS,) + grid.shape))
    band = grid.k_magnitude <= k_max * grid.min_wavenumber + 1e-12
    coeffs *= band
    coeffs[..., 0, 0, 0] = 0.0
    if components is not None:
        unknown = set(components) - set(COMPONENT_GROUPS)
        if unknown:
            raise ParameterError(f"Unknown field groups: {sorted(unknown)}")
        keep = np.zeros(N_COMPONENTS, dtype=bool)
        for name in components:
            keep[COMPONENT_GROUPS[name]] = True
        coeffs[~keep] = 0.0

    mean_norm = math.sqrt(grid.volume * (means[0] ** 2 + means[1] ** 2))
    if mean_norm > amplitude:
        raise ParameterError("zero-mode values alone exceed the requested H^3 norm")
    norm = h3_norm(ops, coeffs)
    if norm > 0:
        coeffs *= math.sqrt(amplitude ** 2 - mean_norm ** 2) / norm
    coeffs[RHO, 0, 0, 0] = means[0]
    coeffs[ETA, 0, 0, 0] = means[1]
    return FieldState.from_stacked(ops.ifft(coeffs), 0.0)


def single_mode_data(grid, mode, amplitudes, threads=1) -> FieldState:
    """Real fields Re(a_c exp(i k.x)) on one integer mode, a_c per solver component"""
    amplitudes = np.asarray(amplitudes, dtype=complex)
    if amplitudes.shape != (N_COMPONENTS,):
        raise ParameterError(f"need {N_COMPONENTS} amplitudes, got {amplitudes.shape}")
    mode = tuple(int(m) for m in mode)
    if any(abs(m) > grid.n / 3.0 for m in mode):
        raise ParameterError(f"mode {mode} lies outside the dealiased band")
    ops = SpectralOps(grid, threads)
    coeffs = np.zeros((N_COMPONENTS,) + grid.shape, dtype=complex)
    plus = tuple(m % grid.n for m in mode)
    minus = tuple(-m % grid.n for m in mode)
    coeffs[(slice(None),) + plus] += 0.5 * amplitudes
    coeffs[(slice(None),) + minus] += 0.5 * np.conj(amplitudes)
    return FieldState.from_stacked(ops.ifft(coeffs), 0.0)
