"""
Radial quadrature of low-frequency norms and the Duhamel-driven stress.
"""
import math

import numpy as np
import pytest
from scipy.special import erf

from src.decay_analyser import DECAY_TARGETS, DecayAnalyser, DecaySeries, sample_times
from src.decay_quadrature import (PROFILE_SIZE, RadialQuadrature, default_profile,
                                  driven_tau_decay, driven_tau_decays, driven_tau_integrand,
                                  driven_tau_oracle, duhamel_kernel, lowfreq_decay_norm,
                                  lowfreq_decay_norms, profile_moments)
from src.errors import ParameterError


def heat_closed_form(t, c0, weight=1.0):
    """4 pi weight int_0^c0 r^2 exp(-2 r^2 t) dr"""
    a = 2.0 * t
    inner = (math.sqrt(math.pi) * erf(c0 * math.sqrt(a)) / (4.0 * a ** 1.5)
             - c0 * math.exp(-a * c0 ** 2) / (2.0 * a))
    return 4.0 * math.pi * weight * inner


class TestRadialQuadrature:
    def test_rejects_bad_settings(self):
        with pytest.raises(ParameterError):
            RadialQuadrature(c0=0.0)
        with pytest.raises(ParameterError):
            RadialQuadrature(nodes=8)

    @pytest.mark.parametrize("m", [0, 1, 3])
    def test_polynomial_moments(self, m):
        quadrature = RadialQuadrature(c0=0.5, nodes=64)
        value = quadrature.integrate(lambda r: np.ones_like(r), 10.0, [m])[0]
        assert value == pytest.approx(4 * math.pi * 0.5 ** (2 * m + 3) / (2 * m + 3), rel=1e-12)

    def test_breakpoints_inside_ball(self):
        edges = RadialQuadrature(c0=0.5).breakpoints(100.0)
        assert edges[0] == 0.0 and edges[-1] == 0.5
        assert np.all(np.diff(edges) > 0)


class TestLowFrequencyNorm:
    def test_initial_norm_is_ball_volume(self, sp, params):
        quadrature = RadialQuadrature(c0=0.5, nodes=64)
        profile = 2.0 * default_profile()
        value = lowfreq_decay_norm(0, 0.0, sp, params, profile, quadrature)
        assert value == pytest.approx(2.0 * math.sqrt(4 * math.pi * 0.5 ** 3 / 3), rel=1e-10)

    @pytest.mark.parametrize("t", [1.0, 10.0, 300.0])
    def test_heat_reduction(self, sp, params, t):
        quadrature = RadialQuadrature(c0=0.5, nodes=256)
        value = lowfreq_decay_norm(0, t, sp, params, quadrature=quadrature, kind='heat')
        assert value ** 2 == pytest.approx(heat_closed_form(t, 0.5), rel=1e-8)

    def test_profile_moments_trace(self, rng):
        profile = rng.standard_normal(PROFILE_SIZE)
        S4, S2 = profile_moments(profile)
        assert np.trace(S4) + np.trace(S2) == pytest.approx(float(profile @ profile))
        with pytest.raises(ParameterError):
            profile_moments(np.ones(3))

    def test_norms_decrease(self, sp, params):
        quadrature = RadialQuadrature(c0=0.5, nodes=256)
        early = lowfreq_decay_norms([0, 1], 10.0, sp, params, quadrature=quadrature)
        late = lowfreq_decay_norms([0, 1], 100.0, sp, params, quadrature=quadrature)
        assert np.all(late < early)

    def test_invalid_arguments(self, sp, params):
        with pytest.raises(ParameterError):
            lowfreq_decay_norm(-1, 1.0, sp, params)
        with pytest.raises(ParameterError):
            lowfreq_decay_norm(0, -1.0, sp, params)
        with pytest.raises(ParameterError):
            lowfreq_decay_norm(0, 1.0, sp, params, kind='wave')

    @pytest.mark.slow
    def test_fitted_slopes(self, sp, params):
        quadrature = RadialQuadrature(c0=0.5, nodes=2048)
        analyser = DecayAnalyser()
        times = sample_times((10.0, 1e3), 25)
        norms = np.vstack([lowfreq_decay_norms(range(4), t, sp, params, quadrature=quadrature)
                           for t in times])
        for m in range(4):
            series = DecaySeries(times, norms[:, m], m=m)
            slope, _ = analyser.fit_slope(series)
            assert slope == pytest.approx(DECAY_TARGETS['linear'](m), abs=0.1)


class TestDuhamel:
    def test_scalar_kernel(self):
        lam, b, t = 0.5, 2.0, 3.0
        K = duhamel_kernel(np.array([[[lam]]]), np.array([b]), t)
        expected = (math.exp(-lam * t) - math.exp(-b * t)) / (b - lam)
        assert K[0, 0, 0] == pytest.approx(expected, rel=1e-10)

    def test_kernel_vanishes_at_zero_time(self):
        K = duhamel_kernel(np.ones((2, 2, 2)), np.ones(2), 0.0)
        np.testing.assert_array_equal(K, 0.0)

    @pytest.mark.parametrize("t", [0.5, 5.0, 40.0])
    def test_integrand_matches_ode_oracle(self, sp, params, t):
        r = np.array([0.02, 0.1, 0.3])
        profile = default_profile()
        values = driven_tau_integrand(r, t, sp, params, profile, tau0_sq=0.3)
        expected = [driven_tau_oracle(ri, t, sp, params, profile, tau0_sq=0.3) for ri in r]
        np.testing.assert_allclose(values, expected, rtol=1e-7, atol=1e-14)

    def test_undriven_stress_decays_exponentially(self, sp, params):
        quadrature = RadialQuadrature(c0=0.5, nodes=64)
        zero = np.zeros(PROFILE_SIZE)
        start = driven_tau_decay(0, 0.0, sp, params, zero, tau0_sq=1.0, quadrature=quadrature)
        assert start == pytest.approx(math.sqrt(4 * math.pi * 0.5 ** 3 / 3), rel=1e-10)
        one = driven_tau_decay(0, 1.0, sp, params, zero, tau0_sq=1.0, quadrature=quadrature)
        two = driven_tau_decay(0, 2.0, sp, params, zero, tau0_sq=1.0, quadrature=quadrature)
        assert two / one <= math.exp(-params.damping) * (1 + 1e-10)

    def test_stress_starts_from_rest_by_default(self, sp, params):
        quadrature = RadialQuadrature(c0=0.5, nodes=64)
        assert driven_tau_decay(0, 0.0, sp, params, quadrature=quadrature) == 0.0
        assert driven_tau_decay(0, 1.0, sp, params, quadrature=quadrature) > 0.0
        seeded = driven_tau_decay(0, 0.0, sp, params, tau0_sq=1.0, quadrature=quadrature)
        assert seeded == pytest.approx(math.sqrt(4 * math.pi * 0.5 ** 3 / 3), rel=1e-10)

    def test_order_limited(self, sp, params):
        with pytest.raises(ParameterError):
            driven_tau_decays([3], 1.0, sp, params)

    @pytest.mark.slow
    def test_fitted_slopes(self, sp, params):
        quadrature = RadialQuadrature(c0=0.5, nodes=2048)
        analyser = DecayAnalyser()
        times = sample_times((10.0, 1e3), 20)
        norms = np.vstack([driven_tau_decays([0, 1, 2], t, sp, params, quadrature=quadrature)
                           for t in times])
        for m in range(3):
            slope, _ = analyser.fit_slope(DecaySeries(times, norms[:, m], m=m))
            assert slope == pytest.approx(DECAY_TARGETS['driven_tau'](m), abs=0.1)
