# src/decay_quadrature.py
"""Whole-space decay norms of the linear and the driven stress problems.

Constant-in-xi data reduces every norm to a radial integral over the ball
|xi| <= c0; the angular average of |exp(-tA_xi) U0|^2 is written through the
block semigroups G = E^T E as tr(G4 S4) + tr(G2 S2).
"""
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import solve_ivp

from config import QUADRATURE_CONFIG, TOLERANCES
from src.errors import ParameterError, QuadratureError
from src.linear_symbol import build_symbol, semigroup
from src.logger import setup_logger

logger = setup_logger("decay_quadrature")

PROFILE_SIZE = 8  # (rho, u1, u2, u3, eta, w1, w2, w3), w = div tau


def default_profile():
    return np.ones(PROFILE_SIZE) / math.sqrt(PROFILE_SIZE)


def profile_moments(profile):
    """Angular second moments (S4, S2) of a constant data vector"""
    profile = np.asarray(profile, dtype=float)
    if profile.shape != (PROFILE_SIZE,):
        raise ParameterError(f"profile must hold {PROFILE_SIZE} numbers")
    rho0, u0, eta0, w0 = profile[0], profile[1:4], profile[4], profile[5:8]
    uu, uw, ww = u0 @ u0, u0 @ w0, w0 @ w0
    S4 = np.array([
        [rho0 ** 2, 0.0, rho0 * eta0, 0.0],
        [0.0, uu / 3.0, 0.0, uw / 3.0],
        [rho0 * eta0, 0.0, eta0 ** 2, 0.0],
        [0.0, uw / 3.0, 0.0, ww / 3.0],
    ])
    S2 = (2.0 / 3.0) * np.array([[uu, uw], [uw, ww]])
    return S4, S2


@dataclass
class RadialQuadrature:
    """Composite Gauss-Legendre on [0, c0] with node doubling"""
    c0: float = QUADRATURE_CONFIG['c0']
    nodes: int = QUADRATURE_CONFIG['nodes']
    max_nodes: int = QUADRATURE_CONFIG['max_nodes']
    rel_tol: float = QUADRATURE_CONFIG['rel_tol']

    def __post_init__(self):
        if not self.c0 > 0:
            raise ParameterError("c0 must be positive")
        if self.nodes < 16:
            raise ParameterError("at least 16 radial nodes are required")

    def breakpoints(self, t):
        """Panel edges clustered around the self-similar scale (1+t)^(-1/2)"""
        scale = 1.0 / math.sqrt(1.0 + t)
        inner = [j * scale for j in (0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0)]
        edges = [0.0] + [e for e in inner if 0 < e < self.c0] + [self.c0]
        return np.array(sorted(set(edges)))

    def rule(self, t, n_total):
        edges = self.breakpoints(t)
        per_panel = max(8, n_total // (len(edges) - 1))
        x, w = leggauss(per_panel)
        lo, hi = edges[:-1, None], edges[1:, None]
        half = 0.5 * (hi - lo)
        nodes = (lo + half * (x[None, :] + 1.0)).ravel()
        weights = (half * w[None, :]).ravel()
        return nodes, weights

    def integrate(self, integrand, t, orders):
        """4 pi int_0^c0 r^(2m+2) F(r) dr for every m in orders, with node doubling"""
        orders = np.atleast_1d(orders)
        n = self.nodes
        previous = None
        while n <= self.max_nodes:
            r, w = self.rule(t, n)
            values = integrand(r)
            powers = r[None, :] ** (2 * orders[:, None] + 2)
            current = 4.0 * math.pi * (powers * values[None, :]) @ w
            if previous is not None:
                scale = np.maximum(np.abs(current), 1e-300)
                if np.all(np.abs(current - previous) <= self.rel_tol * scale):
                    return current
            previous = current
            n *= 2
            logger.debug(f"t={t}: doubling radial nodes to {n}")
        raise QuadratureError(
            f"radial quadrature did not converge to {self.rel_tol} with {self.max_nodes} nodes at t={t}")


def _block_semigroups(r, t, sp, p):
    M4, M2 = build_symbol(r, sp, p)
    return semigroup(M4, t, cross_check=False), semigroup(M2, t, cross_check=False)


def lowfreq_integrand(r, t, sp, p, profile):
    """Angular mean of |exp(-t A_xi) U0|^2 at each radius"""
    S4, S2 = profile_moments(profile)
    E4, E2 = _block_semigroups(r, t, sp, p)
    G4 = np.swapaxes(E4, -1, -2) @ E4
    G2 = np.swapaxes(E2, -1, -2) @ E2
    return np.einsum('rij,ji->r', G4, S4) + np.einsum('rij,ji->r', G2, S2)


def heat_integrand(r, t, profile):
    return np.exp(-2.0 * r ** 2 * t) * float(np.sum(np.asarray(profile) ** 2))


def lowfreq_decay_norm(m, t, sp, p, profile=None, quadrature=None, kind='symbol'):
    """(int_{|xi|<=c0} |xi|^2m |exp(-tA_xi) U0|^2 dxi)^(1/2); kind='heat' swaps in exp(-r^2 t)"""
    values = lowfreq_decay_norms([m], t, sp, p, profile, quadrature, kind)
    return float(values[0])


def lowfreq_decay_norms(orders, t, sp, p, profile=None, quadrature=None, kind='symbol'):
    if min(orders) < 0:
        raise ParameterError("derivative order must be nonnegative")
    if t < 0:
        raise ParameterError("time must be nonnegative")
    profile = default_profile() if profile is None else np.asarray(profile, dtype=float)
    quadrature = quadrature or RadialQuadrature()
    if kind == 'heat':
        def integrand(r):
            return heat_integrand(r, t, profile)
    elif kind == 'symbol':
        def integrand(r):
            return lowfreq_integrand(r, t, sp, p, profile)
    else:
        raise ParameterError(f"unknown profile kind {kind}")
    return np.sqrt(np.maximum(quadrature.integrate(integrand, t, orders), 0.0))


# driven stress

def duhamel_panels(t, rate_min, rate_max, cutoff=QUADRATURE_CONFIG['duhamel_cutoff']):
    """Panel edges on [0, t] graded geometrically toward s = t and s = 0.

    exp(-b (t - s)) < exp(-cutoff) left of t - cutoff/rate_min, so that part
    of the interval is dropped.
    """
    if t <= 0:
        return np.array([0.0, 0.0])
    first = 0.25 / rate_max
    widest = 2.0
    horizon = min(t, cutoff / rate_min)
    edges = {t, t - horizon}
    width, s = first, t
    while s - width > t - horizon:
        s -= width
        edges.add(s)
        width = min(2.0 * width, widest)
    if horizon >= t:
        width, s = first, 0.0
        while s + width < t:
            s += width
            edges.add(s)
            width = min(2.0 * width, widest)
    return np.array(sorted(edges))


def _duhamel_rule(edges, order):
    x, w = leggauss(order)
    lo, hi = edges[:-1, None], edges[1:, None]
    half = 0.5 * (hi - lo)
    return (lo + half * (x[None, :] + 1.0)).ravel(), (half * w[None, :]).ravel()


def duhamel_kernel(M, damp, t, order=QUADRATURE_CONFIG['panel_order'], chunk=512):
    """K(t) = int_0^t exp(-b(t-s)) exp(-sM) ds for a batch of matrices M with rates b"""
    M = np.asarray(M)
    damp = np.asarray(damp, dtype=float)
    K = np.zeros(M.shape)
    if t == 0:
        return K
    edges = duhamel_panels(t, float(damp.min()), float(damp.max()))
    for order_used in (order, 2 * order):
        s, w = _duhamel_rule(edges, order_used)
        trial = np.zeros(M.shape)
        for start in range(0, M.shape[0], chunk):
            stop = start + chunk
            trial[start:stop] = _kernel_chunk(M[start:stop], damp[start:stop], t, s, w)
        if order_used == order:
            K = trial
            continue
        scale = max(1e-300, float(np.abs(trial).max()))
        if float(np.abs(trial - K).max()) > 1e-10 * scale:
            raise QuadratureError(f"Duhamel quadrature unresolved at t={t}")
        K = trial
    return K


def _kernel_chunk(M, damp, t, s, w):
    lam, V = np.linalg.eig(M)
    cond = np.linalg.cond(V)
    weight = w[None, :] * np.exp(-damp[:, None] * (t - s[None, :]))
    K = np.empty(M.shape)
    good = np.isfinite(cond) & (cond < TOLERANCES['eig_condition'])
    if np.any(good):
        psi = np.einsum('rn,rjn->rj', weight[good],
                        np.exp(-lam[good][:, :, None] * s[None, None, :]))
        Vg = V[good]
        K[good] = (Vg @ (psi[..., None] * np.linalg.inv(Vg))).real
    for idx in np.flatnonzero(~good):
        E = semigroup(M[idx][None], s, cross_check=False)
        K[idx] = np.einsum('n,nij->ij', weight[idx], E)
    return K


def driven_tau_integrand(r, t, sp, p, profile, tau0_sq=0.0):
    """Angular mean of |tau_hat(xi, t)|^2 for the damped, u-driven stress equation"""
    S4, S2 = profile_moments(profile)
    M4, M2 = build_symbol(r, sp, p)
    damp = p.damping + p.eps * r ** 2
    bk = sp.beta * p.k * p.eta_bar
    K4 = duhamel_kernel(M4, damp, t)
    K2 = duhamel_kernel(M2, damp, t)
    k4 = K4[:, 1, :]
    k2 = K2[:, 0, :]
    longitudinal = np.einsum('ri,ij,rj->r', k4, S4, k4)
    transverse = np.einsum('ri,ij,rj->r', k2, S2, k2)
    driven = 2.0 * bk ** 2 * r ** 2 * (2.0 * longitudinal + transverse)
    return np.exp(-2.0 * damp * t) * tau0_sq + driven


def driven_tau_decay(m, t, sp, p, profile=None, tau0_sq=0.0, quadrature=None):
    """||nabla^m tau(t)|| restricted to |xi| <= c0.

    tau0_sq is the angular mean of |tau_hat(xi, 0)|^2, taken constant in xi. The
    default 0 starts the stress from rest, so the t = 0 sample is 0 and every
    later value is the part driven by the velocity alone.
    """
    return float(driven_tau_decays([m], t, sp, p, profile, tau0_sq, quadrature)[0])


def driven_tau_decays(orders, t, sp, p, profile=None, tau0_sq=0.0, quadrature=None):
    if any(m not in (0, 1, 2) for m in orders):
        raise ParameterError("driven stress decay is defined for m in {0, 1, 2}")
    if t < 0:
        raise ParameterError("time must be nonnegative")
    profile = default_profile() if profile is None else np.asarray(profile, dtype=float)
    quadrature = quadrature or RadialQuadrature()

    def integrand(r):
        return driven_tau_integrand(r, t, sp, p, profile, tau0_sq)

    return np.sqrt(np.maximum(quadrature.integrate(integrand, t, orders), 0.0))


def driven_tau_oracle(r, t, sp, p, profile=None, tau0_sq=0.0, rtol=1e-11, atol=1e-13):
    """Same integrand by direct integration of the augmented mode system.

    Phi' = -M Phi and K' = -b K + Phi with Phi(0) = I, K(0) = 0, both blocks.
    """
    profile = default_profile() if profile is None else np.asarray(profile, dtype=float)
    S4, S2 = profile_moments(profile)
    M4, M2 = build_symbol(r, sp, p)
    damp = p.damping + p.eps * r ** 2
    bk = sp.beta * p.k * p.eta_bar

    def kernel(M):
        size = M.shape[0]

        def rhs(_, y):
            Phi = y[:size * size].reshape(size, size)
            K = y[size * size:].reshape(size, size)
            return np.concatenate([(-M @ Phi).ravel(), (-damp * K + Phi).ravel()])

        y0 = np.concatenate([np.eye(size).ravel(), np.zeros(size * size)])
        if t == 0:
            return np.zeros((size, size))
        sol = solve_ivp(rhs, (0.0, t), y0, method='DOP853', rtol=rtol, atol=atol)
        if not sol.success:
            raise QuadratureError(f"mode ODE failed: {sol.message}")
        return sol.y[size * size:, -1].reshape(size, size)

    k4 = kernel(M4)[1]
    k2 = kernel(M2)[0]
    driven = 2.0 * bk ** 2 * r ** 2 * (2.0 * k4 @ S4 @ k4 + k2 @ S2 @ k2)
    return math.exp(-2.0 * damp * t) * tau0_sq + driven
