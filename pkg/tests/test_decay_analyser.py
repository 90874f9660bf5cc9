"""
Slope fitting and the convolution decay lemma.
"""
import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from src.decay_analyser import (DECAY_TARGETS, TOP_ORDER_TAU_TARGET, DecayAnalyser,
                                DecaySeries, sample_times)
from src.errors import FitError, ParameterError


@pytest.fixture
def analyser():
    return DecayAnalyser()


@pytest.fixture
def times():
    return sample_times((10.0, 1e3), 40)


class TestFitSlope:
    def test_exact_power_law(self, analyser, times):
        series = DecaySeries(times, (1 + times) ** -0.75)
        slope, stderr = analyser.fit_slope(series)
        assert slope == pytest.approx(-0.75, abs=1e-10)
        assert series.slope == slope
        assert stderr < 1e-8

    @given(scale=st.floats(1e-6, 1e6))
    @settings(max_examples=30, deadline=None)
    def test_scale_invariance(self, scale):
        times = sample_times((10.0, 1e3), 40)
        slope, _ = DecayAnalyser().fit_slope(DecaySeries(times, scale * (1 + times) ** -1.25))
        assert slope == pytest.approx(-1.25, abs=1e-9)

    def test_perturbed_power_law(self, analyser, times):
        values = (1 + times) ** -0.75 * (1 + 0.01 * np.sin(np.log(times)))
        slope, _ = analyser.fit_slope(DecaySeries(times, values))
        assert slope == pytest.approx(-0.75, abs=0.02)

    def test_window_restricts_samples(self, analyser):
        times = sample_times((1.0, 1e4), 80)
        values = np.where(times < 10, 1.0, (1 + times) ** -2.0)
        slope, _ = analyser.fit_slope(DecaySeries(times, values), window=(20.0, 1e4))
        assert slope == pytest.approx(-2.0, abs=1e-10)

    def test_too_few_samples(self, analyser):
        times = np.linspace(10, 20, 5)
        with pytest.raises(FitError):
            analyser.fit_slope(DecaySeries(times, 1 / times))

    def test_nonpositive_values(self, analyser, times):
        values = (1 + times) ** -1.0
        values[3] = 0.0
        with pytest.raises(FitError):
            analyser.fit_slope(DecaySeries(times, values))

    def test_times_must_increase(self):
        with pytest.raises(FitError):
            DecaySeries([1.0, 1.0, 2.0], [1.0, 1.0, 1.0])

    def test_series_frame_columns(self, analyser, times):
        frame = analyser.series_frame(DecaySeries(times, (1 + times) ** -0.5))
        assert list(frame.columns) == ['t', 'norm', 'fitted_slope_so_far']
        assert np.isnan(frame['fitted_slope_so_far'].iloc[1])
        assert frame['fitted_slope_so_far'].iloc[-1] == pytest.approx(-0.5, abs=1e-10)


class TestTargets:
    def test_rates(self):
        assert [DECAY_TARGETS['linear'](m) for m in range(4)] == [-0.75, -1.25, -1.75, -2.25]
        assert [DECAY_TARGETS['driven_tau'](m) for m in range(3)] == [-1.25, -1.75, -2.25]
        assert TOP_ORDER_TAU_TARGET == -2.25

    def test_check_and_summary(self, analyser, times):
        good = DecaySeries(times, (1 + times) ** -0.8, label='good', m=0)
        bad = DecaySeries(times, (1 + times) ** -0.3, label='bad', m=0)
        analyser.fit_slope(good)
        analyser.fit_slope(bad)
        checks = [analyser.check_exponent(s, -0.75, 0.1) for s in (good, bad)]
        assert [c['passed'] for c in checks] == [True, False]
        frame, verdict = analyser.summarise(checks)
        assert not verdict
        assert len(frame) == 2


class TestConvolution:
    @pytest.mark.parametrize("a, b", [(2.5, 1.5), (3.5, 0.5)])
    def test_ratio_bounded(self, analyser, a, b):
        table = analyser.convolution_decay_check(a, b, [1, 10, 100, 1000, 10000])
        assert np.all(np.isfinite(table['ratio']))
        assert analyser.ratio_bounded(table)
        assert table['ratio'].max() < 10.0

    def test_growing_tail_with_flat_last_pair(self, analyser):
        t = np.logspace(0, 8, 9)
        ratio = (1.0 + t) ** 0.5
        ratio[-1] = ratio[-2]
        assert not analyser.ratio_bounded(pd.DataFrame({'t': t, 'ratio': ratio}))

    def test_single_jump_at_the_end_is_tolerated(self, analyser):
        t = np.logspace(0, 8, 9)
        ratio = np.ones_like(t)
        ratio[-1] = 1.08
        assert analyser.ratio_bounded(pd.DataFrame({'t': t, 'ratio': ratio}))

    def test_unbounded_ratio(self, analyser):
        table = analyser.convolution_decay_check(2.5, 2.5, [1, 10, 100, 1000])
        table['ratio'] *= (1.0 + table['t'])
        assert not analyser.ratio_bounded(table)

    def test_zero_time(self, analyser):
        table = analyser.convolution_decay_check(2.5, 1.5, [0.0])
        assert table['integral'].iloc[0] == 0.0
        assert table['ratio'].iloc[0] == 0.0

    def test_closed_form_bound_without_decay(self, analyser):
        table = analyser.convolution_decay_check(2.0, 0.0, [1, 10, 100, 1000])
        assert np.all(table['ratio'] <= table['bound'])
        assert table['bound'].iloc[0] == pytest.approx(1.0)
        # int_0^t (1+t-s)^-2 ds = 1 - 1/(1+t)
        np.testing.assert_allclose(table['integral'], [0.5, 10 / 11, 100 / 101, 1000 / 1001],
                                   rtol=1e-9)

    @pytest.mark.parametrize("a, b", [(1.0, 0.5), (2.0, 2.5), (2.0, -0.1)])
    def test_parameter_domain(self, analyser, a, b):
        with pytest.raises(ParameterError):
            analyser.convolution_decay_check(a, b, [1.0])

    def test_negative_time(self, analyser):
        with pytest.raises(ParameterError):
            analyser.convolution_decay_check(2.5, 1.5, [-1.0])
