# src/decay_analyser.py
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import integrate, stats

from config import FIT_CONFIG
from src.errors import FitError, ParameterError
from src.logger import setup_logger

# Theorem-level exponents of ||nabla^m f(t)|| ~ (1+t)^slope
DECAY_TARGETS = {
    'linear': lambda m: -(0.75 + 0.5 * m),
    'driven_tau': lambda m: -(1.25 + 0.5 * m),
}
TOP_ORDER_TAU_TARGET = -2.25


@dataclass
class DecaySeries:
    """Norm samples ||nabla^m f(t_i)|| with their fitted log-log slope"""
    times: np.ndarray
    values: np.ndarray
    label: str = ''
    m: int = 0
    window: tuple = (FIT_CONFIG['t_min'], FIT_CONFIG['t_max'])
    slope: float = math.nan
    stderr: float = math.nan

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise FitError("times and values must be matching 1-d arrays")
        if np.any(np.diff(self.times) <= 0):
            raise FitError("sample times must be strictly increasing")

    def in_window(self, window=None):
        lo, hi = window or self.window
        mask = (self.times >= lo) & (self.times <= hi)
        return self.times[mask], self.values[mask]

    def to_frame(self):
        return pd.DataFrame({'t': self.times, 'norm': self.values})


def sample_times(window=None, samples=FIT_CONFIG['samples']):
    """Log-spaced sample times covering the fit window"""
    lo, hi = window or (FIT_CONFIG['t_min'], FIT_CONFIG['t_max'])
    return np.geomspace(lo, hi, samples)


class DecayAnalyser:
    def __init__(self, min_samples=FIT_CONFIG['min_samples']):
        self.logger = setup_logger("decay_analyser")
        self.min_samples = min_samples

    def fit_slope(self, series: DecaySeries, window=None):
        """Least-squares slope of log(value) against log(1+t) inside the window"""
        times, values = series.in_window(window)
        if len(times) < self.min_samples:
            raise FitError(f"{len(times)} samples in the fit window, need {self.min_samples}")
        if np.any(~np.isfinite(values)) or np.any(values <= 0):
            raise FitError(f"nonpositive or non-finite values in series '{series.label}'")
        fit = stats.linregress(np.log1p(times), np.log(values))
        series.slope, series.stderr = float(fit.slope), float(fit.stderr)
        if window is not None:
            series.window = tuple(window)
        return series.slope, series.stderr

    def running_slopes(self, series: DecaySeries):
        """Slope fitted on the samples up to each time (NaN before three samples)"""
        slopes = np.full(len(series.times), np.nan)
        x, y = np.log1p(series.times), np.log(np.maximum(series.values, np.finfo(float).tiny))
        for i in range(2, len(series.times)):
            slopes[i] = stats.linregress(x[:i + 1], y[:i + 1]).slope
        return slopes

    def series_frame(self, series: DecaySeries):
        """CSV layout of a decay run: t, norm, fitted_slope_so_far"""
        frame = series.to_frame()
        frame['fitted_slope_so_far'] = self.running_slopes(series)
        return frame

    def check_exponent(self, series: DecaySeries, target, tol=FIT_CONFIG['slope_tol']):
        passed = bool(abs(series.slope - target) <= tol)
        level = self.logger.info if passed else self.logger.warning
        level(f"{series.label}: slope {series.slope:.4f} vs target {target:.4f} "
              f"(tol {tol:g}) -> {'PASS' if passed else 'FAIL'}")
        return {
            'series': series.label,
            'm': series.m,
            'slope': series.slope,
            'stderr': series.stderr,
            'target': target,
            'tol': tol,
            'passed': passed,
        }

    def convolution_decay_check(self, a, b, t_list):
        """Ratio of int_0^t (1+t-s)^-a (1+s)^-b ds to (1+t)^-b for each t"""
        if not a > 1 or not 0 <= b <= a:
            raise ParameterError(f"need a > 1 and 0 <= b <= a, got a={a}, b={b}")
        t_list = np.asarray(t_list, dtype=float)
        if np.any(t_list < 0):
            raise ParameterError("times must be nonnegative")

        rows = []
        for t in t_list:
            if t == 0:
                value = 0.0
            else:
                value = self._convolution_integral(a, b, t)
            rows.append({'t': t, 'integral': value, 'ratio': value * (1.0 + t) ** b})
        table = pd.DataFrame(rows)
        if b == 0:
            table['bound'] = 1.0 / (a - 1.0)
        return table

    @staticmethod
    def _convolution_integral(a, b, t):
        def f(s):
            return (1.0 + t - s) ** (-a) * (1.0 + s) ** (-b)

        # both factors peak at an end point; split at t/2 and grade towards the ends
        scales = (1.0, 10.0, 100.0, 1000.0)
        half = 0.5 * t
        head = [d for d in scales if d < half] or None
        tail = [t - d for d in scales if d < half] or None
        first, _ = integrate.quad(f, 0.0, half, points=head, limit=200, epsabs=0.0, epsrel=1e-10)
        second, _ = integrate.quad(f, half, t, points=tail, limit=200, epsabs=0.0, epsrel=1e-10)
        return first + second

    def ratio_bounded(self, table, growth_tol=0.05):
        """True when the ratio stays finite and, over the last third of the
        positive-time rows, grows no faster than (1+t)^growth_tol"""
        ratio = table['ratio'].to_numpy()
        if not np.all(np.isfinite(ratio)):
            return False
        t = table['t'].to_numpy()
        keep = (t > 0) & (ratio > 0)
        ratio, t = ratio[keep], t[keep]
        if len(ratio) < 2:
            return True
        tail = max(2, math.ceil(len(ratio) / 3))
        trend = stats.linregress(np.log1p(t[-tail:]), np.log(ratio[-tail:])).slope
        return bool(trend <= growth_tol)

    def summarise(self, checks):
        """One row per checked series plus the overall verdict"""
        frame = pd.DataFrame(checks)
        verdict = bool(frame['passed'].all()) if not frame.empty else False
        self.logger.info(f"{int(frame['passed'].sum()) if not frame.empty else 0}/{len(frame)} exponents within tolerance")
        return frame, verdict
