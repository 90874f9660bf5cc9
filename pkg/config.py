# config.py
import math
import os

from dotenv import load_dotenv

load_dotenv()

# Model Configuration (artifact defaults, nondimensional)
DEFAULT_MODEL_PARAMS = {
    'a': 1.0,          # pressure coefficient, P(rho) = a * rho**gamma
    'gamma': 2.0,
    'rho_bar': 1.0,
    'eta_bar': 1.0,
    'k': 1.0,
    'L': 2.0,
    'z': 0.5,
    'eps': 1.0,        # centre-of-mass diffusion
    'A0': 2.0,
    'lam': 1.0,
    'mu': 0.0,
    'nu': 0.0,
}

# Periodic box
GRID_CONFIG = {
    'n': 32,
    'length': 2 * math.pi,
}

# Radial quadrature on [0, c0]
QUADRATURE_CONFIG = {
    'c0': 0.5,
    'nodes': 2048,
    'max_nodes': 32768,
    'rel_tol': 1e-8,
    'panel_order': 16,     # Gauss-Legendre points per Duhamel panel
    'duhamel_cutoff': 45.0,
}

# Slope fitting
FIT_CONFIG = {
    't_min': 10.0,
    't_max': 1e3,
    'samples': 40,
    'min_samples': 10,
    'slope_tol': 0.1,
    'slope_tol_top': 0.15,
}

SCAN_CONFIG = {
    'r_max': 1.0,
    'radii': 400,
    'states': 500,
    'c_cap': 10.0,
}

SOLVER_CONFIG = {
    'dt': 1e-2,
    't_end': 1.0,
    'cadence': 10,
    'cfl': 0.5,
    'amplitude': 1e-3,
    'k_max': 3,
}

# Vanishing-viscosity sweep: nu follows mu at a fixed ratio, 2 + 3 * nu_over_mu >= 0
VISCOSITY_CONFIG = {
    'nu_over_mu': 0.0,
}

AUDIT_CONFIG = {
    'c_gen': 10.0,
    'delta': 1e-2,
    'tol_diss': 1e-6,
}

TOLERANCES = {
    'semigroup_check': 1e-9,
    'eig_condition': 1e6,
    'semigroup_condition': 1e8,   # expm cross-check runs below this eigenvector condition
    'equivalence': 1e-7,
    'monotone_abs': 1e-10,
    'monotone_rel': 1e-6,
}

# Output
OUTPUT_DIR = os.getenv('OLDROYD_OUTPUT_DIR', 'data/processed')
LOG_LEVEL = os.getenv('OLDROYD_LOG_LEVEL', 'INFO')
DEFAULT_THREADS = int(os.getenv('OLDROYD_THREADS', '1'))
DEFAULT_SEED = 20240601
