# src/model_core.py
import json
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from config import DEFAULT_MODEL_PARAMS
from src.errors import DomainError, GridMismatchError, ParameterError
from src.logger import setup_logger

logger = setup_logger("model_core")

# Storage order of the six independent components of a symmetric 3x3 tensor
TENSOR_INDEX = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))
DIAGONAL = (0, 1, 2)
# Multiplicity of each stored component in a full double contraction A:B
TENSOR_WEIGHTS = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the compressible Oldroyd-B system"""
    a: float = DEFAULT_MODEL_PARAMS['a']
    gamma: float = DEFAULT_MODEL_PARAMS['gamma']
    rho_bar: float = DEFAULT_MODEL_PARAMS['rho_bar']
    eta_bar: float = DEFAULT_MODEL_PARAMS['eta_bar']
    k: float = DEFAULT_MODEL_PARAMS['k']
    L: float = DEFAULT_MODEL_PARAMS['L']
    z: float = DEFAULT_MODEL_PARAMS['z']
    eps: float = DEFAULT_MODEL_PARAMS['eps']
    A0: float = DEFAULT_MODEL_PARAMS['A0']
    lam: float = DEFAULT_MODEL_PARAMS['lam']
    mu: float = DEFAULT_MODEL_PARAMS['mu']
    nu: float = DEFAULT_MODEL_PARAMS['nu']

    def __post_init__(self):
        checks = [
            (self.a > 0, "a must be positive"),
            (self.gamma > 1, "gamma must exceed 1"),
            (self.rho_bar > 0, "rho_bar must be positive"),
            (self.eta_bar > 0, "eta_bar must be positive"),
            (self.k > 0, "k must be positive"),
            (self.L >= 1, "L must be at least 1"),
            (self.z >= 0, "z must be nonnegative"),
            (self.eps > 0, "eps must be positive"),
            (self.A0 > 0, "A0 must be positive"),
            (self.lam > 0, "lam must be positive"),
            (self.mu >= 0, "mu must be nonnegative"),
            (2 * self.mu + 3 * self.nu >= 0, "2 mu + 3 nu must be nonnegative"),
        ]
        for ok, message in checks:
            if not ok:
                raise ParameterError(message)
        for f in fields(self):
            if not math.isfinite(getattr(self, f.name)):
                raise ParameterError(f"{f.name} must be finite")

    @property
    def damping(self):
        """Relaxation rate A0/(2 lam)"""
        return self.A0 / (2.0 * self.lam)

    @property
    def viscous(self):
        return self.mu != 0.0 or self.nu != 0.0

    def pressure(self, rho):
        return self.a * np.power(rho, self.gamma)

    def pressure_derivative(self, rho):
        return self.a * self.gamma * np.power(rho, self.gamma - 1.0)

    def replace(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ParameterError(f"Unknown model parameters: {sorted(unknown)}")
        try:
            values = {key: float(value) for key, value in data.items()}
        except (TypeError, ValueError) as e:
            raise ParameterError(f"Model parameters must be numbers: {e}") from e
        return cls(**values)


@dataclass(frozen=True)
class ScaledParams:
    r1: float
    r2: float
    r3: float
    beta: float
    mu1: float
    mu2: float

    @property
    def eta_degenerate(self):
        return self.r2 == 0.0

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class StressTensor:
    """Symmetric 3x3 tensor (field) stored as its six independent components"""
    components: np.ndarray

    def __post_init__(self):
        if np.shape(self.components)[0] != 6:
            raise GridMismatchError("a stress tensor needs exactly six components")

    @property
    def shape(self):
        return np.shape(self.components)[1:]

    def matrix(self):
        """Full (3, 3, ...) array"""
        comps = np.asarray(self.components)
        full = np.empty((3, 3) + comps.shape[1:], dtype=comps.dtype)
        for c, (i, j) in enumerate(TENSOR_INDEX):
            full[i, j] = comps[c]
            full[j, i] = comps[c]
        return full

    @classmethod
    def from_matrix(cls, full):
        full = np.asarray(full)
        return cls(np.stack([full[i, j] for i, j in TENSOR_INDEX]))

    @classmethod
    def identity(cls, shape=(), scale=1.0):
        scale = np.broadcast_to(np.asarray(scale, dtype=float), shape)
        comps = np.zeros((6,) + tuple(shape))
        comps[list(DIAGONAL)] = scale
        return cls(comps)

    def trace(self):
        return self.components[0] + self.components[1] + self.components[2]


def derive_scaled(params: ModelParams) -> ScaledParams:
    """Scaled constants of the linearised system"""
    r1 = math.sqrt(params.a * params.gamma * params.rho_bar ** (params.gamma - 1.0))
    r2 = (params.k * (params.L - 1.0) + 2.0 * params.z * params.eta_bar) / r1
    sp = ScaledParams(
        r1=r1,
        r2=r2,
        r3=1.0 / r1,
        beta=r1 / params.rho_bar,
        mu1=params.mu / params.rho_bar,
        mu2=(params.mu + params.nu) / params.rho_bar,
    )
    if sp.eta_degenerate:
        logger.warning("r2 = 0 (L = 1, z = 0): eta-weighted functionals degenerate")
    return sp


def _total_density(rho_pert, params):
    rho = np.asarray(rho_pert, dtype=float) + params.rho_bar
    if np.any(rho <= 0) or np.any(~np.isfinite(rho)):
        raise DomainError("rho' + rho_bar must stay positive")
    return rho


def h_fn(rho_pert, sp: ScaledParams, params: ModelParams):
    """(P'(rho_bar)/rho_bar - P'(rho)/rho) / beta"""
    rho = _total_density(rho_pert, params)
    background = params.a * params.gamma * params.rho_bar ** (params.gamma - 2.0)
    value = (background - params.a * params.gamma * np.power(rho, params.gamma - 2.0)) / sp.beta
    return value if np.ndim(value) else float(value)


def g_fn(rho_pert, sp: ScaledParams, params: ModelParams):
    """(1/rho_bar - 1/rho) / beta"""
    rho = _total_density(rho_pert, params)
    value = (1.0 / params.rho_bar - 1.0 / rho) / sp.beta
    return value if np.ndim(value) else float(value)


def _as_components(tensor):
    if isinstance(tensor, StressTensor):
        return np.asarray(tensor.components)
    return StressTensor(np.asarray(tensor)).components


def reformulate_stress(T, eta, params: ModelParams) -> StressTensor:
    """tau = T - k eta I, eta being the total polymer density"""
    comps = _as_components(T)
    eta = np.asarray(eta, dtype=float)
    if comps.shape[1:] != eta.shape:
        raise GridMismatchError(f"stress grid {comps.shape[1:]} vs eta grid {eta.shape}")
    tau = comps.copy()
    tau[list(DIAGONAL)] -= params.k * eta
    return StressTensor(tau)


def unreformulate_stress(tau, eta, params: ModelParams) -> StressTensor:
    """T = tau + k eta I"""
    comps = _as_components(tau)
    eta = np.asarray(eta, dtype=float)
    if comps.shape[1:] != eta.shape:
        raise GridMismatchError(f"stress grid {comps.shape[1:]} vs eta grid {eta.shape}")
    T = comps.copy()
    T[list(DIAGONAL)] += params.k * eta
    return StressTensor(T)


def load_params(path) -> ModelParams:
    """Read the `params` section of a JSON configuration file"""
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            document = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ParameterError(f"Cannot read parameter file {path}: {e}") from e
    section = document.get('params', document) if isinstance(document, dict) else None
    if not isinstance(section, dict):
        raise ParameterError(f"{path} holds no parameter mapping")
    merged = dict(DEFAULT_MODEL_PARAMS)
    merged.update(section)
    return ModelParams.from_dict(merged)


def provenance(params: ModelParams, sp: ScaledParams = None):
    """Raw and derived constants, echoed into every output header"""
    sp = sp or derive_scaled(params)
    header = dict(params.to_dict())
    header.update(sp.to_dict())
    header['damping'] = params.damping
    header['eta_degenerate'] = sp.eta_degenerate
    return header
