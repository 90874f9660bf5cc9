# tests/conftest.py
import numpy as np
import pytest

from src.model_core import ModelParams, derive_scaled
from src.spectral_field import Grid, SpectralOps


@pytest.fixture
def params():
    return ModelParams()


@pytest.fixture
def sp(params):
    return derive_scaled(params)


@pytest.fixture
def grid():
    return Grid(16)


@pytest.fixture
def ops(grid):
    return SpectralOps(grid)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def smooth_random(ops, rng, ncomp=None, zero_mean=True):
    """Random real field restricted to the dealiased band"""
    shape = ops.grid.shape if ncomp is None else (ncomp,) + ops.grid.shape
    coeffs = ops.dealias(ops.fft(rng.standard_normal(shape)))
    if zero_mean:
        coeffs[..., 0, 0, 0] = 0.0
    return ops.ifft(coeffs)
