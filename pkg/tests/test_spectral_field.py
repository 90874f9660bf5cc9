"""
Transforms, derivative multipliers and the frequency decomposition on the periodic box.
"""
import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.errors import GridMismatchError, ParameterError
from src.spectral_field import FrequencySplit, Grid, SpectralField, SpectralOps, infer_valence
from tests.conftest import smooth_random


class TestGrid:
    def test_requires_power_of_two(self):
        with pytest.raises(ParameterError):
            Grid(12)
        with pytest.raises(ParameterError):
            Grid(4)

    def test_cell_volume(self, grid):
        assert grid.cell_volume * grid.n ** 3 == pytest.approx(grid.volume)

    def test_dealias_mask_drops_nyquist(self, grid):
        assert not grid.dealias_mask[grid.n // 2, 0, 0]
        assert grid.dealias_mask[1, 0, 0]

    def test_wavevectors_scale_with_box(self):
        grid = Grid(8, length=4 * math.pi)
        assert grid.min_wavenumber == pytest.approx(0.5)
        assert grid.wavevector[0, 1, 0, 0] == pytest.approx(0.5)


class TestTransforms:
    """Forward-normalised FFT conventions."""

    def test_constant_field(self, ops, grid):
        coeffs = ops.fft(np.full(grid.shape, 3.0))
        assert coeffs[0, 0, 0] == pytest.approx(3.0)
        coeffs[0, 0, 0] = 0.0
        assert np.max(np.abs(coeffs)) < 1e-14

    def test_single_sine(self, ops, grid):
        x = grid.coordinates
        coeffs = ops.fft(np.sin(x[0]))
        nonzero = np.argwhere(np.abs(coeffs) > 1e-12)
        assert sorted(map(tuple, nonzero)) == [(1, 0, 0), (grid.n - 1, 0, 0)]
        assert abs(coeffs[1, 0, 0]) == pytest.approx(0.5)

    def test_parseval(self, ops, grid, rng):
        f = rng.standard_normal(grid.shape)
        direct = grid.cell_volume * np.sum(f ** 2)
        assert ops.l2_norm(f) ** 2 == pytest.approx(direct, rel=1e-10)

    def test_sine_norms(self, ops, grid):
        f = np.sin(grid.coordinates[0])
        assert ops.l2_norm(f) ** 2 == pytest.approx(grid.volume / 2)
        assert ops.norm_m(f, 1) == pytest.approx(ops.l2_norm(f))

    def test_constant_has_no_derivatives(self, ops, grid):
        f = np.full(grid.shape, 2.0)
        for m in (1, 2, 3):
            assert ops.norm_m(f, m) == pytest.approx(0.0, abs=1e-12)

    def test_h1_norm_definition(self, ops, rng):
        f = smooth_random(ops, rng, zero_mean=False)
        h1 = ops.norm_m(f, 0) ** 2 + ops.norm_m(f, 1) ** 2
        assert ops.inner(f, f, 0) + ops.inner(f, f, 1) == pytest.approx(h1, rel=1e-12)

    def test_grid_mismatch(self, ops):
        with pytest.raises(GridMismatchError):
            ops.fft(np.zeros((8, 8, 8)))
        other = SpectralOps(Grid(8))
        sf = other.transform(np.zeros((8, 8, 8)))
        with pytest.raises(GridMismatchError):
            ops.inverse_transform(sf)

    def test_transform_round_trip(self, ops, rng, grid):
        u = rng.standard_normal((3,) + grid.shape)
        sf = ops.transform(u)
        assert sf.valence == 'vector'
        np.testing.assert_allclose(ops.inverse_transform(sf), u, atol=1e-12)

    def test_valence_checks(self, grid):
        assert infer_valence(np.zeros((6,) + grid.shape)) == 'tensor'
        with pytest.raises(GridMismatchError):
            SpectralField(np.zeros((2,) + grid.shape, dtype=complex), 'vector', grid)


class TestDerivatives:
    def test_gradient_of_sine(self, ops, grid):
        x = grid.coordinates
        grad = ops.gradient(np.sin(x[0]))
        np.testing.assert_allclose(grad[0], np.cos(x[0]), atol=1e-12)
        np.testing.assert_allclose(grad[1:], 0.0, atol=1e-12)

    def test_laplacian_of_sine(self, ops, grid):
        x = grid.coordinates
        np.testing.assert_allclose(ops.laplacian(np.sin(x[0])), -np.sin(x[0]), atol=1e-12)

    def test_div_grad_is_laplacian(self, ops, rng):
        f = smooth_random(ops, rng)
        np.testing.assert_allclose(ops.divergence(ops.gradient(f)), ops.laplacian(f), atol=1e-10)

    def test_nabla_m_shape_and_norm(self, ops, rng, grid):
        f = smooth_random(ops, rng)
        full = ops.nabla_m(f, 2)
        assert full.shape == (3, 3) + grid.shape
        direct = math.sqrt(grid.cell_volume * np.sum(full ** 2))
        assert direct == pytest.approx(ops.norm_m(f, 2), rel=1e-10)

    def test_symmetric_gradient_of_shear(self, ops, grid):
        x = grid.coordinates
        u = np.stack([np.sin(x[1]), np.zeros(grid.shape), np.zeros(grid.shape)])
        sym = ops.symmetric_gradient(u)
        np.testing.assert_allclose(sym[3], np.cos(x[1]), atol=1e-12)
        np.testing.assert_allclose(sym[[0, 1, 2, 4, 5]], 0.0, atol=1e-12)

    def test_curl(self, ops, grid, rng):
        x = grid.coordinates
        u = np.stack([np.zeros(grid.shape), np.zeros(grid.shape), np.sin(x[0])])
        curl = ops.curl(u)
        np.testing.assert_allclose(curl[1], -np.cos(x[0]), atol=1e-12)
        np.testing.assert_allclose(curl[[0, 2]], 0.0, atol=1e-12)
        v = smooth_random(ops, rng, 3)
        np.testing.assert_allclose(ops.divergence(ops.curl(v)), 0.0, atol=1e-10)

    def test_tensor_divergence_of_isotropic_stress(self, ops, grid):
        x = grid.coordinates
        tau = np.zeros((6,) + grid.shape)
        tau[:3] = np.sin(x[2])
        div = ops.tensor_divergence(tau)
        np.testing.assert_allclose(div[2], np.cos(x[2]), atol=1e-12)
        np.testing.assert_allclose(div[:2], 0.0, atol=1e-12)


class TestFrequencySplit:
    """Smooth cutoff phi0 and the Bernstein-type bound on the high part."""

    def test_profile_plateaus(self):
        fs = FrequencySplit(1.0)
        np.testing.assert_allclose(fs.profile([0.0, 0.5, 1.0, 3.0]), [1.0, 1.0, 0.0, 0.0])
        inner = fs.profile(np.linspace(0.51, 0.99, 20))
        assert np.all(np.diff(inner) <= 0)

    def test_low_frequency_field_stays_low(self, ops, grid):
        f = np.sin(grid.coordinates[0])
        low, high = ops.split(f, FrequencySplit(2.0))
        np.testing.assert_allclose(low, f, atol=1e-12)
        np.testing.assert_allclose(high, 0.0, atol=1e-12)

    def test_high_frequency_field_stays_high(self, ops, grid):
        f = np.sin(2 * grid.coordinates[0])
        low, high = ops.split(f, FrequencySplit(1.0))
        np.testing.assert_allclose(high, f, atol=1e-12)

    def test_split_is_exact_complement(self, ops, rng, grid):
        f = rng.standard_normal(grid.shape)
        low, high = ops.split(f, FrequencySplit(3.0))
        np.testing.assert_allclose(low + high, f, atol=1e-12)
        total = ops.l2_norm(f) ** 2
        cross = grid.cell_volume * np.sum(low * high)
        assert total == pytest.approx(ops.l2_norm(low) ** 2 + ops.l2_norm(high) ** 2 + 2 * cross,
                                      rel=1e-10)

    def test_bernstein_on_sine(self, ops, grid):
        f = np.sin(2 * grid.coordinates[0])
        assert ops.bernstein_check(f, 1, 0, 1.0) == pytest.approx(ops.l2_norm(f), rel=1e-12)

    def test_bernstein_without_high_part(self, ops, grid):
        f = np.sin(grid.coordinates[0])
        residual = ops.bernstein_check(f, 2, 0, 4.0)
        assert residual == pytest.approx(ops.norm_m(f, 2), rel=1e-12)

    def test_bernstein_order_check(self, ops, grid):
        with pytest.raises(ParameterError):
            ops.bernstein_check(np.zeros(grid.shape), 0, 1, 1.0)

    @given(seed=st.integers(0, 2 ** 32 - 1), c0=st.floats(0.1, 1.0),
           pair=st.sampled_from([(1, 0), (2, 1), (3, 0)]))
    @settings(max_examples=40, deadline=None)
    def test_bernstein_random_fields(self, seed, c0, pair):
        ops = SpectralOps(Grid(8))
        f = np.random.default_rng(seed).standard_normal(ops.grid.shape)
        assert ops.bernstein_check(f, *pair, c0) >= -1e-10


class TestHodge:
    """d = Lambda^-1 div u, Pu = Lambda^-1 curl u and the reconstruction."""

    def test_gradient_field_has_no_curl_part(self, ops, rng):
        phi = smooth_random(ops, rng)
        _, Pu = ops.hodge(ops.gradient(phi))
        np.testing.assert_allclose(Pu, 0.0, atol=1e-10)

    def test_solenoidal_field_has_no_divergence_part(self, ops, rng):
        u = ops.curl(smooth_random(ops, rng, 3))
        d, _ = ops.hodge(u)
        np.testing.assert_allclose(d, 0.0, atol=1e-10)

    def test_reconstruct(self, ops, rng):
        u = smooth_random(ops, rng, 3)
        d, Pu = ops.hodge(u)
        back = ops.reconstruct(d, Pu)
        assert ops.l2_norm(back - u) <= 1e-10 * ops.l2_norm(u)

    def test_parts_are_orthogonal(self, ops, rng):
        u = smooth_random(ops, rng, 3)
        gradient_part, solenoidal_part = ops.hodge_parts(*ops.hodge(u))
        scale = ops.l2_norm(u) ** 2
        assert abs(ops.inner(gradient_part, solenoidal_part)) <= 1e-10 * scale

    def test_lambda_warns_on_mean(self, ops, grid, caplog):
        f = np.ones(grid.shape)
        with caplog.at_level(logging.WARNING):
            out = ops.lambda_op(f, -1)
        assert np.allclose(out, 0.0)
        assert any("nonzero mean" in r.message for r in caplog.records)

    def test_lambda_zero_power_is_identity(self, ops, rng):
        f = smooth_random(ops, rng, zero_mean=False)
        np.testing.assert_allclose(ops.lambda_op(f, 0), f, atol=1e-12)
