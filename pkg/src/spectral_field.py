# src/spectral_field.py
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import fft
from scipy.special import expit

from config import GRID_CONFIG, QUADRATURE_CONFIG
from src.errors import GridMismatchError, ParameterError
from src.model_core import TENSOR_INDEX
from src.logger import setup_logger

VALENCE_COMPONENTS = {'scalar': 1, 'vector': 3, 'tensor': 6}
AXES = (-3, -2, -1)


@dataclass(frozen=True)
class Grid:
    """Cubic periodic box with N points per axis"""
    n: int = GRID_CONFIG['n']
    length: float = GRID_CONFIG['length']

    def __post_init__(self):
        if self.n < 8 or self.n & (self.n - 1):
            raise ParameterError(f"grid size must be a power of two >= 8, got {self.n}")
        if not self.length > 0:
            raise ParameterError("box length must be positive")

    @property
    def shape(self):
        return (self.n, self.n, self.n)

    @property
    def volume(self):
        return self.length ** 3

    @property
    def spacing(self):
        return self.length / self.n

    @property
    def cell_volume(self):
        return self.spacing ** 3

    @cached_property
    def mode_index(self):
        """Integer mode numbers along one axis"""
        return np.fft.fftfreq(self.n, d=1.0 / self.n)

    @cached_property
    def wavevector(self):
        """(3, N, N, N) array of physical wavevectors"""
        k1 = self.mode_index * (2.0 * math.pi / self.length)
        return np.stack(np.meshgrid(k1, k1, k1, indexing='ij'))

    @cached_property
    def k_squared(self):
        return np.sum(self.wavevector ** 2, axis=0)

    @cached_property
    def k_magnitude(self):
        return np.sqrt(self.k_squared)

    @cached_property
    def dealias_mask(self):
        """False on every mode with some |k_i| above N/3"""
        m = np.abs(self.mode_index) <= self.n / 3.0
        return m[:, None, None] & m[None, :, None] & m[None, None, :]

    @cached_property
    def coordinates(self):
        x = np.arange(self.n) * self.spacing
        return np.stack(np.meshgrid(x, x, x, indexing='ij'))

    @cached_property
    def min_wavenumber(self):
        return 2.0 * math.pi / self.length


@dataclass
class SpectralField:
    """Fourier coefficients f_k with f(x) = sum_k f_k exp(i k.x)"""
    coeffs: np.ndarray
    valence: str
    grid: Grid

    def __post_init__(self):
        if self.valence not in VALENCE_COMPONENTS:
            raise ParameterError(f"unknown valence {self.valence}")
        expected = self.grid.shape if self.valence == 'scalar' else (
            (VALENCE_COMPONENTS[self.valence],) + self.grid.shape)
        if self.coeffs.shape != expected:
            raise GridMismatchError(f"coefficients {self.coeffs.shape} do not match {expected}")

    @property
    def mean(self):
        return self.coeffs[..., 0, 0, 0]


@dataclass(frozen=True)
class FrequencySplit:
    """Smooth low/high frequency cutoff at radius c0"""
    c0: float = QUADRATURE_CONFIG['c0']

    def __post_init__(self):
        if not self.c0 > 0:
            raise ParameterError("cutoff c0 must be positive")

    def profile(self, radius):
        """phi0: 1 on |xi| <= c0/2, 0 on |xi| >= c0, smooth monotone step between"""
        s = 2.0 * np.asarray(radius, dtype=float) / self.c0 - 1.0
        inside = (s > 0) & (s < 1)
        sc = np.where(inside, s, 0.5)
        step = expit(1.0 / sc - 1.0 / (1.0 - sc))
        return np.where(s <= 0, 1.0, np.where(s >= 1, 0.0, step))


def infer_valence(field):
    field = np.asarray(field)
    if field.ndim == 3:
        return 'scalar'
    for name, count in VALENCE_COMPONENTS.items():
        if field.ndim == 4 and field.shape[0] == count and name != 'scalar':
            return name
    raise GridMismatchError(f"cannot infer valence of an array shaped {field.shape}")


class SpectralOps:
    """Transforms and Fourier multipliers on one grid"""

    def __init__(self, grid: Grid, threads=1):
        self.grid = grid
        self.threads = max(1, int(threads))
        self.logger = setup_logger("spectral_ops")

    # transforms
    def _check(self, array):
        if tuple(np.shape(array)[-3:]) != self.grid.shape:
            raise GridMismatchError(
                f"field shape {np.shape(array)} does not match grid {self.grid.shape}")

    def fft(self, field):
        self._check(field)
        return fft.fftn(field, axes=AXES, norm="forward", workers=self.threads)

    def ifft(self, coeffs):
        self._check(coeffs)
        return fft.ifftn(coeffs, axes=AXES, norm="forward", workers=self.threads).real

    def transform(self, field, valence=None) -> SpectralField:
        valence = valence or infer_valence(field)
        return SpectralField(self.fft(np.asarray(field, dtype=float)), valence, self.grid)

    def inverse_transform(self, sf: SpectralField):
        if sf.grid != self.grid:
            raise GridMismatchError("spectral field belongs to another grid")
        return self.ifft(sf.coeffs)

    def _coeffs(self, f):
        return f.coeffs if isinstance(f, SpectralField) else self.fft(np.asarray(f, dtype=float))

    # norms
    def mode_energy(self, coeffs):
        """|box| * sum |f_k|^2 summed over leading component axes, per mode"""
        energy = np.abs(coeffs) ** 2
        while energy.ndim > 3:
            energy = energy.sum(axis=0)
        return self.grid.volume * energy

    def l2_norm(self, f):
        return math.sqrt(float(np.sum(self.mode_energy(self._coeffs(f)))))

    def norm_m(self, f, m=0, coeffs=None):
        """||nabla^m f||_{L2} by Parseval"""
        coeffs = self._coeffs(f) if coeffs is None else coeffs
        weight = self.grid.k_squared ** m if m else 1.0
        return math.sqrt(float(np.sum(weight * self.mode_energy(coeffs))))

    def inner(self, f, g, m=0):
        """integral of nabla^m f : nabla^m g"""
        fc, gc = self._coeffs(f), self._coeffs(g)
        prod = (fc * np.conj(gc)).real
        while prod.ndim > 3:
            prod = prod.sum(axis=0)
        weight = self.grid.k_squared ** m if m else 1.0
        return float(self.grid.volume * np.sum(weight * prod))

    # differential operators in spectral space
    def spectral_gradient(self, coeffs):
        """d_j f for every component; derivative axis leads"""
        ik = 1j * self.grid.wavevector
        return ik.reshape((3,) + (1,) * (coeffs.ndim - 3) + self.grid.shape) * coeffs[None]

    def spectral_divergence(self, coeffs):
        return np.sum(1j * self.grid.wavevector * coeffs, axis=0)

    def spectral_tensor_divergence(self, comps):
        """(div tau)_i = d_j tau_ij for six stored components"""
        ik = 1j * self.grid.wavevector
        out = np.zeros((3,) + comps.shape[1:], dtype=complex)
        for c, (i, j) in enumerate(TENSOR_INDEX):
            out[i] += ik[j] * comps[c]
            if i != j:
                out[j] += ik[i] * comps[c]
        return out

    def dealias(self, coeffs):
        return coeffs * self.grid.dealias_mask

    # physical-space operators
    def gradient(self, f):
        return self.ifft(self.spectral_gradient(self._coeffs(f)))

    def divergence(self, u):
        return self.ifft(self.spectral_divergence(self._coeffs(u)))

    def tensor_divergence(self, tau):
        return self.ifft(self.spectral_tensor_divergence(self._coeffs(tau)))

    def laplacian(self, f):
        return self.ifft(-self.grid.k_squared * self._coeffs(f))

    def symmetric_gradient(self, u):
        """d_i u_j + d_j u_i as six stored components"""
        grad = self.spectral_gradient(self._coeffs(u))
        comps = np.stack([grad[i, j] + grad[j, i] for i, j in TENSOR_INDEX])
        return self.ifft(comps)

    def curl(self, u):
        ik = 1j * self.grid.wavevector
        c = self._coeffs(u)
        return self.ifft(np.stack([
            ik[1] * c[2] - ik[2] * c[1],
            ik[2] * c[0] - ik[0] * c[2],
            ik[0] * c[1] - ik[1] * c[0],
        ]))

    def nabla_m(self, f, m):
        """m-fold gradient as a full tensor, derivative axes leading"""
        coeffs = self._coeffs(f)
        for _ in range(m):
            coeffs = self.spectral_gradient(coeffs)
        return self.ifft(coeffs)

    # frequency decomposition
    def split(self, f, fs: FrequencySplit):
        coeffs = self._coeffs(f)
        phi = fs.profile(self.grid.k_magnitude)
        low = self.ifft(phi * coeffs)
        high = self.ifft((1.0 - phi) * coeffs)
        return low, high

    def low_coeffs(self, coeffs, fs: FrequencySplit):
        return fs.profile(self.grid.k_magnitude) * coeffs

    def bernstein_check(self, f, m1, m2, c0):
        """||nabla^m1 f|| - c0^(m1-m2) ||nabla^m2 f^h||"""
        if m2 > m1:
            raise ParameterError("bernstein_check needs m2 <= m1")
        coeffs = self._coeffs(f)
        phi = FrequencySplit(c0).profile(self.grid.k_magnitude)
        high = (1.0 - phi) * coeffs
        return self.norm_m(None, m1, coeffs) - c0 ** (m1 - m2) * self.norm_m(None, m2, high)

    def lambda_multiplier(self, s):
        kmag = self.grid.k_magnitude
        mult = np.zeros_like(kmag)
        nonzero = kmag > 0
        mult[nonzero] = kmag[nonzero] ** s
        if s == 0:
            mult[~nonzero] = 1.0
        return mult

    def lambda_op(self, f, s):
        """Multiply coefficients by |xi|^s; the zero mode of a negative power is 0"""
        coeffs = self._coeffs(f)
        if s < 0:
            mean = np.abs(coeffs[..., 0, 0, 0])
            if np.any(mean > 1e-14 * max(1.0, float(np.max(np.abs(coeffs))))):
                self.logger.warning(
                    f"Lambda^{s} applied to a field with nonzero mean; zero mode set to 0")
        return self.ifft(self.lambda_multiplier(s) * coeffs)

    def hodge(self, u):
        """d = Lambda^-1 div u and Pu = Lambda^-1 curl u (full antisymmetric 3x3)"""
        coeffs = self._coeffs(u)
        inv = self.lambda_multiplier(-1)
        ik = 1j * self.grid.wavevector
        d = self.ifft(inv * np.sum(ik * coeffs, axis=0))
        curl = ik[None, :] * coeffs[:, None] - ik[:, None] * coeffs[None, :]
        return d, self.ifft(inv * curl)

    def reconstruct(self, d, Pu):
        """u = -Lambda^-1 grad d - Lambda^-1 div Pu"""
        gradient_part, solenoidal_part = self.hodge_parts(d, Pu)
        return gradient_part + solenoidal_part

    def hodge_parts(self, d, Pu):
        inv = self.lambda_multiplier(-1)
        ik = 1j * self.grid.wavevector
        d_hat = self.fft(np.asarray(d, dtype=float))
        P_hat = self.fft(np.asarray(Pu, dtype=float))
        gradient_part = -inv * ik * d_hat
        solenoidal_part = -inv * np.sum(ik[None, :] * P_hat, axis=1)
        return self.ifft(gradient_part), self.ifft(solenoidal_part)
