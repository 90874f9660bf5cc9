# src/linear_symbol.py
"""Fourier symbols of the linearised operator and their low-frequency theory.

Both blocks are written as d/dt X + M(r) X = 0 with r = |xi|:

    4-block  X = (rho, d, eta, q),  d = i xi.u/|xi|,  q = i xi.div(tau)/|xi|
    2-block  X = (Pu, P div tau)    (one copy per transverse direction)
"""
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import linalg

from config import SCAN_CONFIG, TOLERANCES
from src.errors import DegenerateModeError, ParameterError, SemigroupMismatchError
from src.logger import setup_logger

logger = setup_logger("linear_symbol")


@dataclass
class CorrectedModes:
    """(a, o, z, q) for the 4-block or (v, w) for the 2-block"""
    block: int
    values: np.ndarray
    r: np.ndarray
    A1: np.ndarray = None
    A2: np.ndarray = None

    @property
    def a(self):
        return self.values[..., 0]

    @property
    def o(self):
        return self.values[..., 1]

    @property
    def z(self):
        return self.values[..., 2]

    @property
    def q(self):
        return self.values[..., 3]

    @property
    def v(self):
        return self.values[..., 0]

    @property
    def w(self):
        return self.values[..., 1]


@dataclass
class CriticalRadii:
    c1: float
    c2: float
    c0: float
    kappa4: float
    kappa2: float
    table: pd.DataFrame = field(repr=False)
    certified: bool = True


@dataclass
class SemigroupBound:
    block: int
    C5: float
    C: float
    residual: float
    passed: bool


def _radii(r):
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ParameterError("radius must be nonnegative")
    return r


def build_symbol(r, sp, p):
    """Real 4x4 and 2x2 symbols at radius r (scalar or array)"""
    r = _radii(r)
    r2 = r ** 2
    bk = sp.beta * p.k * p.eta_bar
    damp = p.damping + p.eps * r2

    M4 = np.zeros(r.shape + (4, 4))
    M4[..., 0, 1] = sp.r1 * r
    M4[..., 1, 0] = -sp.r1 * r
    M4[..., 1, 1] = (sp.mu1 + sp.mu2) * r2
    M4[..., 1, 2] = -sp.r2 * r
    M4[..., 1, 3] = -sp.r3
    M4[..., 2, 1] = sp.beta * p.eta_bar * r
    M4[..., 2, 2] = p.eps * r2
    M4[..., 3, 1] = 2.0 * bk * r2
    M4[..., 3, 3] = damp

    M2 = np.zeros(r.shape + (2, 2))
    M2[..., 0, 0] = sp.mu1 * r2
    M2[..., 0, 1] = -sp.r3
    M2[..., 1, 0] = bk * r2
    M2[..., 1, 1] = damp
    return M4, M2


def build_full_symbol(xi, sp, p):
    """Complex 8x8 symbol on (rho, u1, u2, u3, eta, w1, w2, w3), w = div tau"""
    xi = np.asarray(xi, dtype=float)
    r2 = float(xi @ xi)
    bk = sp.beta * p.k * p.eta_bar
    eye = np.eye(3)
    outer = np.outer(xi, xi)

    A = np.zeros((8, 8), dtype=complex)
    A[0, 1:4] = 1j * sp.r1 * xi
    A[1:4, 0] = 1j * sp.r1 * xi
    A[1:4, 1:4] = sp.mu1 * r2 * eye + sp.mu2 * outer
    A[1:4, 4] = 1j * sp.r2 * xi
    A[1:4, 5:8] = -sp.r3 * eye
    A[4, 1:4] = 1j * sp.beta * p.eta_bar * xi
    A[4, 4] = p.eps * r2
    A[5:8, 1:4] = bk * (r2 * eye + outer)
    A[5:8, 5:8] = (p.damping + p.eps * r2) * eye
    return A


def orthonormal_frame(xi):
    """Unit xi together with two unit vectors spanning its orthogonal plane"""
    xi = np.asarray(xi, dtype=float)
    norm = np.linalg.norm(xi)
    if norm == 0:
        raise ParameterError("the Hodge frame is undefined at xi = 0")
    n = xi / norm
    helper = np.eye(3)[int(np.argmin(np.abs(n)))]
    e1 = np.cross(n, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    return n, e1, e2


def hodge_basis(xi):
    """Unitary T with columns (rho, d, eta, q, v1, w1, v2, w2) in full-symbol coordinates"""
    n, e1, e2 = orthonormal_frame(xi)
    T = np.zeros((8, 8), dtype=complex)
    T[0, 0] = 1.0
    T[1:4, 1] = -1j * n
    T[4, 2] = 1.0
    T[5:8, 3] = -1j * n
    T[1:4, 4] = e1
    T[5:8, 5] = e1
    T[1:4, 6] = e2
    T[5:8, 7] = e2
    return T


def block_diagonal_symbol(r, sp, p):
    M4, M2 = build_symbol(r, sp, p)
    return linalg.block_diag(M4, M2, M2)


def semigroup(M, t, cross_check=True, tol=TOLERANCES['semigroup_check']):
    """exp(-t M) for a (batch of) square matrices; t broadcasts against the batch"""
    M = np.asarray(M)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ParameterError("semigroup needs t >= 0")
    tM = t[..., None, None] * M
    E = linalg.expm(-tM)
    if cross_check:
        _cross_check(tM, E, tol)
    return E


def _cross_check(tM, E, tol, max_condition=TOLERANCES['semigroup_condition']):
    batch = tM.reshape((-1,) + tM.shape[-2:])
    expected = E.reshape(batch.shape)
    w, V = np.linalg.eig(batch)
    cond = np.linalg.cond(V)
    good = np.isfinite(cond) & (cond < max_condition)
    if not np.any(good):
        return
    Vg = V[good]
    spectral = Vg @ (np.exp(-w[good])[..., None] * np.linalg.inv(Vg))
    scale = np.maximum(1.0, np.abs(expected[good]).max(axis=(-2, -1)))
    gap = np.abs(spectral - expected[good]).max(axis=(-2, -1)) / scale
    # eigendecomposition round-off grows like cond * eps * |tM|
    size = np.maximum(1.0, np.abs(batch[good]).max(axis=(-2, -1)))
    allowed = np.maximum(tol, 100.0 * cond[good] * size * np.finfo(float).eps)
    if np.any(gap > allowed):
        raise SemigroupMismatchError(
            f"expm and eigendecomposition disagree by {float(gap.max()):.3e}")


# corrected modes

def _a1_denominator(r, sp, p):
    bk = sp.beta * p.k * p.eta_bar
    return p.damping + (p.eps - 2.0 * bk * sp.r3 / p.damping) * np.asarray(r, dtype=float) ** 2


def correction_matrix(r, sp, p, block=4):
    """C(r) with corrected = C X"""
    r = _radii(r)
    inv_damp = 1.0 / p.damping
    if block == 2:
        C = np.broadcast_to(np.eye(2), r.shape + (2, 2)).copy()
        C[..., 0, 1] = inv_damp * sp.r3
        return C
    den = _a1_denominator(r, sp, p)
    if np.any(den <= 0):
        raise DegenerateModeError(
            f"A1 denominator nonpositive for r = {float(np.max(r)):.4g}")
    A1 = 1.0 / den
    C = np.broadcast_to(np.eye(4), r.shape + (4, 4)).copy()
    C[..., 0, 3] = inv_damp * sp.r3 * sp.r1 * r * A1
    C[..., 1, 3] = inv_damp * sp.r3
    C[..., 2, 3] = inv_damp * sp.r3 * sp.beta * p.eta_bar * r * A1
    return C


def corrected_modes(X, r, sp, p) -> CorrectedModes:
    """Corrected modes of a 4-vector (rho, d, eta, q) or 2-vector (Pu, Pw)"""
    X = np.asarray(X)
    block = X.shape[-1]
    if block not in (2, 4):
        raise ParameterError("mode state must have 2 or 4 components")
    r = _radii(r)
    C = correction_matrix(r, sp, p, block)
    values = np.einsum('...ij,...j->...i', C, X)
    if block == 2:
        return CorrectedModes(2, values, r)
    A1 = 1.0 / _a1_denominator(r, sp, p)
    bk = sp.beta * p.k * p.eta_bar
    inv_damp = 1.0 / p.damping
    A2 = inv_damp * sp.r3 * (2.0 * inv_damp * sp.r3 * bk - p.eps
                             - (sp.r2 * sp.beta * p.eta_bar + sp.r1 ** 2) * A1)
    return CorrectedModes(4, values, r, A1=A1, A2=A2)


def restore_modes(modes: CorrectedModes, sp, p):
    """Inverse of corrected_modes; C - I is nilpotent so C^-1 = 2I - C"""
    C = correction_matrix(modes.r, sp, p, modes.block)
    inverse = 2.0 * np.eye(modes.block) - C
    return np.einsum('...ij,...j->...i', inverse, modes.values)


# Lyapunov functional

def default_eps_tilde(sp, p):
    bk = sp.beta * p.k * p.eta_bar
    second = p.lam * sp.r3 * bk / (p.A0 * sp.r1)
    if sp.r2 == 0:
        return second
    return min(sp.r1 * p.eps / (2.0 * sp.r2 * sp.beta * p.eta_bar), second)


def _weight_matrix(r, eps_tilde, sp, p, block):
    r = _radii(r)
    if block == 2:
        return np.broadcast_to(np.eye(2), r.shape + (2, 2)).copy()
    W = np.broadcast_to(np.eye(4), r.shape + (4, 4)).copy()
    if sp.r2 > 0:
        W[..., 2, 2] = sp.r2 / (sp.beta * p.eta_bar)
    W[..., 0, 1] = -eps_tilde * r
    W[..., 1, 0] = -eps_tilde * r
    return W


def lyapunov_form(r, eps_tilde, sp, p, block=4):
    """Q(r) with L^2 = X^H Q X in raw mode coordinates"""
    C = correction_matrix(r, sp, p, block)
    W = _weight_matrix(r, eps_tilde, sp, p, block)
    return np.swapaxes(C, -1, -2) @ W @ C


def lyapunov_value(modes: CorrectedModes, eps_tilde, sp, p):
    """L^2 = |a|^2 + |o|^2 + (r2/beta eta_bar)|z|^2 + |q|^2 - 2 eps_tilde r Re(conj(a) o)"""
    W = _weight_matrix(modes.r, eps_tilde, sp, p, modes.block)
    y = modes.values
    return np.einsum('...i,...ij,...j->...', np.conj(y), W, y).real


def lyapunov_rate(X, r, eps_tilde, sp, p):
    """d/dt L^2 along dX/dt = -M X"""
    X = np.asarray(X)
    block = X.shape[-1]
    M4, M2 = build_symbol(r, sp, p)
    M = M4 if block == 4 else M2
    Q = lyapunov_form(r, eps_tilde, sp, p, block)
    S = Q @ M + np.swapaxes(M, -1, -2) @ Q
    return -np.einsum('...i,...ij,...j->...', np.conj(X), S, X).real


def lyapunov_certificate(r, eps_tilde, sp, p, block=4):
    """Largest kappa with dL^2/dt <= -2 kappa r^2 L^2 for every state at radius r.

    Smallest eigenvalue of the pencil (QM + M^T Q, Q); -inf if Q is not
    positive definite. Hence dL^2/dt <= -kappa r^2 L^2 as well, and every
    eigenvalue of M has real part >= kappa r^2.
    """
    if r <= 0:
        return math.nan
    M4, M2 = build_symbol(r, sp, p)
    M = M4 if block == 4 else M2
    try:
        Q = lyapunov_form(r, eps_tilde, sp, p, block)
    except DegenerateModeError:
        return -math.inf
    S = Q @ M + M.T @ Q
    try:
        lowest = linalg.eigh(S, Q, eigvals_only=True)[0]
    except linalg.LinAlgError:
        return -math.inf
    return 0.5 * lowest / r ** 2


def two_block_coefficient(r, sp, p):
    """Coefficient of |v|^2 in the 2-block estimate; admissible while >= damping/2"""
    bk = sp.beta * p.k * p.eta_bar
    a = p.damping
    slow = p.eps - sp.r3 * bk / a
    bracket = slow - a * bk / sp.r3 - (sp.r3 / (a * bk)) * slow ** 2
    return a + bracket * np.asarray(r, dtype=float) ** 2


def random_unit_states(n, size, rng):
    X = rng.standard_normal((n, size)) + 1j * rng.standard_normal((n, size))
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def _prefix_radius(radii, ok):
    best = 0.0
    for r, good in zip(radii, ok):
        if r == 0:
            continue
        if not good:
            break
        best = r
    return best


def scan_critical_radius(sp, p, radii=None, n_states=SCAN_CONFIG['states'], seed=0,
                         eps_tilde=None) -> CriticalRadii:
    """Certify the radii where the Lyapunov inequalities hold for both blocks"""
    if radii is None:
        radii = default_radii()
    radii = np.asarray(radii, dtype=float)
    if radii[0] != 0 or np.any(np.diff(radii) <= 0):
        raise ParameterError("radius grid must start at 0 and increase strictly")
    eps_tilde = default_eps_tilde(sp, p) if eps_tilde is None else eps_tilde
    rng = np.random.default_rng(seed)
    logger.info(f"Scanning {len(radii)} radii with {n_states} sampled states each...")

    rows = []
    for r in radii[1:]:
        M4, M2 = build_symbol(r, sp, p)
        kappa4 = lyapunov_certificate(r, eps_tilde, sp, p, 4)
        kappa2 = lyapunov_certificate(r, eps_tilde, sp, p, 2)
        sampled4 = sampled2 = math.nan
        if n_states and np.isfinite(kappa4):
            X = random_unit_states(n_states, 4, rng)
            Q = lyapunov_form(r, eps_tilde, sp, p, 4)
            L = np.einsum('ni,ij,nj->n', np.conj(X), Q, X).real
            sampled4 = float(np.min(-lyapunov_rate(X, r, eps_tilde, sp, p) / (2 * r ** 2 * L)))
        if n_states and np.isfinite(kappa2):
            X = random_unit_states(n_states, 2, rng)
            Q = lyapunov_form(r, eps_tilde, sp, p, 2)
            L = np.einsum('ni,ij,nj->n', np.conj(X), Q, X).real
            sampled2 = float(np.min(-lyapunov_rate(X, r, eps_tilde, sp, p) / (2 * r ** 2 * L)))
        ok4 = (kappa4 > 0 and _a1_denominator(r, sp, p) > 0 and r * eps_tilde < 1)
        ok2 = (kappa2 > 0 and two_block_coefficient(r, sp, p) >= p.damping / 2 - 1e-12)
        rows.append({
            'r': r,
            'min_re_eig4': float(np.min(np.linalg.eigvals(M4).real)),
            'min_re_eig2': float(np.min(np.linalg.eigvals(M2).real)),
            'kappa4': kappa4,
            'kappa2': kappa2,
            'sampled_kappa4': sampled4,
            'sampled_kappa2': sampled2,
            'ok4': bool(ok4),
            'ok2': bool(ok2),
        })
    table = pd.DataFrame(rows)
    c1 = _prefix_radius(table['r'], table['ok4'])
    c2 = _prefix_radius(table['r'], table['ok2'])
    c0 = min(c1, c2)
    table['certified'] = table['r'] <= c0
    if c0 == 0:
        logger.warning("No radius qualifies; parameter set gives an empty certification")
        return CriticalRadii(c1, c2, 0.0, math.nan, math.nan, table, certified=False)

    within = table[table['r'] <= c0]
    kappa4 = float(table[table['r'] <= c1]['kappa4'].min())
    kappa2 = float(table[table['r'] <= c2]['kappa2'].min())
    logger.info(f"Certified c1={c1:.4g}, c2={c2:.4g}, c0={c0:.4g} "
                f"({len(within)} radii, kappa4={kappa4:.4g}, kappa2={kappa2:.4g})")
    return CriticalRadii(c1, c2, c0, kappa4, kappa2, table, certified=True)


def default_radii(r_max=SCAN_CONFIG['r_max'], n=SCAN_CONFIG['radii']):
    return np.concatenate([[0.0], np.geomspace(1e-3, r_max, n)])


def semigroup_norms(block, radii, times, sp, p):
    """Spectral norms ||exp(-t M(r))||_2 on the (r, t) grid"""
    M4, M2 = build_symbol(np.asarray(radii, dtype=float), sp, p)
    M = M4 if block == 4 else M2
    times = np.asarray(times, dtype=float)
    E = semigroup(M[:, None], times[None, :], cross_check=False)
    return np.linalg.norm(E, ord=2, axis=(-2, -1))


def fit_semigroup_bound(block, radii, times, sp, p, c_cap=SCAN_CONFIG['c_cap']):
    """Largest C5 with max ||exp(-tM)|| exp(C5 r^2 t) <= c_cap over the grid"""
    radii = np.asarray(radii, dtype=float)
    times = np.asarray(times, dtype=float)
    norms = np.maximum(semigroup_norms(block, radii, times, sp, p), 1e-300)
    x = radii[:, None] ** 2 * times[None, :]
    log_norm = np.log(norms)

    def log_constant(c5):
        return float(np.max(log_norm + c5 * x))

    log_cap = math.log(c_cap)
    if log_constant(0.0) > log_cap:
        logger.warning(f"Block {block}: semigroup norm exceeds {c_cap} before any decay")
        return SemigroupBound(block, 0.0, math.exp(log_constant(0.0)), math.nan, False)

    lo, hi = 0.0, 1.0
    while log_constant(hi) <= log_cap and hi < 1e6:
        lo, hi = hi, 2.0 * hi
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if log_constant(mid) <= log_cap:
            lo = mid
        else:
            hi = mid
    c5 = lo
    log_c = log_constant(c5)
    resolved = norms > 1e-290
    gap = (log_c - c5 * x - log_norm)[resolved]
    residual = float(np.sqrt(np.mean(gap ** 2))) if gap.size else math.nan
    return SemigroupBound(block, c5, math.exp(log_c), residual, c5 > 0)
