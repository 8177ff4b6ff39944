import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import sosfreqz

from drivestress.errors import (
    DegenerateRangeError,
    EmptyInputError,
    InvalidParameterError,
    SchemaError,
    TimestampError,
)
from drivestress.signal import (
    EDA,
    HR,
    SignalTrace,
    _design_lowpass,
    is_uniform,
    load_trace_csv,
    lowpass_filter,
    minmax_normalize,
    resample_uniform,
)


def make_trace(values, fs=32.0, modality=EDA, drive="d1", times=None):
    values = np.asarray(values, dtype=float)
    if times is None:
        times = np.arange(len(values)) / fs
    return SignalTrace(drive, modality, fs, times, values)


def sine(freq, fs, duration, amp=1.0):
    t = np.arange(0.0, duration, 1.0 / fs)
    return t, amp * np.sin(2 * np.pi * freq * t)


def filtfilt_gain(cutoff, fs, freq, order=2):
    """Oracle: squared magnitude response of the designed filter at freq."""
    sos = _design_lowpass(cutoff, fs, order)
    _, h = sosfreqz(sos, worN=[freq], fs=fs)
    return float(np.abs(h[0]) ** 2)


class TestTraceValidation:
    def test_strictly_increasing_required(self):
        with pytest.raises(TimestampError):
            make_trace([1.0, 2.0, 3.0], times=np.array([0.0, 0.1, 0.1]), fs=10.0)

    def test_undeclared_gap_rejected(self):
        times = np.array([0.0, 0.1, 0.2, 1.2, 1.3])
        with pytest.raises(TimestampError):
            make_trace(np.ones(5) + np.arange(5), times=times, fs=10.0)

    def test_declared_gap_accepted(self):
        times = np.array([0.0, 0.1, 0.2, 1.2, 1.3])
        trace = SignalTrace("d1", EDA, 10.0, times, np.arange(5.0), declared_gaps=((0.2, 1.2),))
        assert len(trace) == 5

    def test_bad_sample_rate(self):
        with pytest.raises(InvalidParameterError):
            SignalTrace("d1", EDA, 0.0, np.array([0.0, 1.0]), np.array([1.0, 2.0]))

    def test_jitter_within_tolerance_ok(self):
        times = np.array([0.0, 0.105, 0.2, 0.295, 0.4])
        trace = make_trace(np.arange(5.0), times=times, fs=10.0)
        assert not is_uniform(trace)


class TestLowpassFilter:
    def test_constant_trace_preserved(self):
        trace = make_trace(np.full(200, 0.5))
        out = lowpass_filter(trace, 1.0)
        assert np.allclose(out.values, 0.5, rtol=1e-6)
        np.testing.assert_array_equal(out.times, trace.times)

    def test_five_hz_attenuated_per_response_oracle(self):
        fs, cutoff = 32.0, 1.0
        t, x = sine(5.0, fs, 60.0)
        trace = SignalTrace("d1", EDA, fs, t, x)
        out = lowpass_filter(trace, cutoff)
        # ignore edge transients
        core = slice(len(t) // 4, 3 * len(t) // 4)
        measured = np.max(np.abs(out.values[core]))
        expected = filtfilt_gain(cutoff, fs, 5.0)
        assert measured < 0.1
        assert measured == pytest.approx(expected, rel=0.25)

    def test_attenuation_at_double_cutoff_exceeds_20db(self):
        # forward-backward pass: amplitude gain |H|^2, 20 dB down means < 0.1
        assert filtfilt_gain(1.0, 32.0, 2.0) < 10 ** (-20 / 20)

    def test_slow_component_survives(self):
        fs = 32.0
        t = np.arange(0.0, 120.0, 1.0 / fs)
        slow = np.sin(2 * np.pi * 0.05 * t)
        fast = np.sin(2 * np.pi * 5.0 * t)
        trace = SignalTrace("d1", EDA, fs, t, slow + fast)
        out = lowpass_filter(trace, 1.0)
        core = slice(len(t) // 4, 3 * len(t) // 4)
        corr = np.corrcoef(out.values[core], slow[core])[0, 1]
        assert corr > 0.99

    def test_linearity(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal(300)
        y = rng.standard_normal(300)
        a, b = 1.7, -0.4
        fx = lowpass_filter(make_trace(x), 1.0).values
        fy = lowpass_filter(make_trace(y), 1.0).values
        fxy = lowpass_filter(make_trace(a * x + b * y), 1.0).values
        np.testing.assert_allclose(fxy, a * fx + b * fy, atol=1e-9)

    def test_cutoff_at_nyquist_rejected(self):
        trace = make_trace(np.ones(50))
        with pytest.raises(InvalidParameterError):
            lowpass_filter(trace, 16.0)
        with pytest.raises(InvalidParameterError):
            lowpass_filter(trace, 20.0)

    def test_empty_trace_rejected(self):
        trace = SignalTrace("d1", EDA, 32.0, np.array([]), np.array([]))
        with pytest.raises(EmptyInputError):
            lowpass_filter(trace, 1.0)

    def test_hr_modality_rejected(self):
        trace = make_trace(np.ones(50), modality=HR)
        with pytest.raises(InvalidParameterError):
            lowpass_filter(trace, 1.0)

    def test_irregular_trace_keeps_timestamps(self):
        rng = np.random.default_rng(3)
        times = np.arange(200) / 10.0 + rng.uniform(-0.004, 0.004, 200)
        times.sort()
        trace = SignalTrace("d1", EDA, 10.0, times, np.sin(times))
        out = lowpass_filter(trace, 1.0)
        np.testing.assert_array_equal(out.times, trace.times)
        assert len(out) == len(trace)


class TestResample:
    def test_uniform_passthrough(self):
        trace = make_trace(np.arange(10.0), fs=2.0)
        assert resample_uniform(trace) is trace

    def test_linear_interpolation(self):
        times = np.array([0.0, 0.6, 1.0, 2.0])
        trace = SignalTrace("d1", EDA, 1.0, times, np.array([0.0, 0.6, 1.0, 2.0]),
                            declared_gaps=((0.0, 2.0),))
        out = resample_uniform(trace)
        np.testing.assert_allclose(out.times, [0.0, 1.0, 2.0])
        np.testing.assert_allclose(out.values, [0.0, 1.0, 2.0])


class TestMinMaxNormalize:
    def test_simple_affine_map(self):
        out = minmax_normalize(make_trace([2.0, 4.0, 6.0]))
        np.testing.assert_allclose(out.values, [0.0, 0.5, 1.0])

    def test_identity_on_unit_range(self):
        out = minmax_normalize(make_trace([0.0, 1.0]))
        np.testing.assert_allclose(out.values, [0.0, 1.0])

    def test_formula_example(self):
        out = minmax_normalize(make_trace([-1.0, 0.0, 3.0]))
        np.testing.assert_allclose(out.values, [0.0, 0.25, 1.0])

    def test_constant_trace_is_error(self):
        with pytest.raises(DegenerateRangeError) as excinfo:
            minmax_normalize(make_trace([0.7, 0.7, 0.7]))
        assert excinfo.value.constant_value == pytest.approx(0.7)

    def test_empty_trace(self):
        trace = SignalTrace("d1", EDA, 32.0, np.array([]), np.array([]))
        with pytest.raises(EmptyInputError):
            minmax_normalize(trace)

    @given(
        st.lists(st.floats(min_value=-1e6, max_value=1e6), min_size=2, max_size=50),
        st.floats(min_value=0.01, max_value=100.0),
        st.floats(min_value=-1e3, max_value=1e3),
    )
    @settings(max_examples=60, deadline=None)
    def test_idempotent_and_affine_invariant(self, values, scale, shift):
        values = np.asarray(values)
        if np.max(values) - np.min(values) < 1e-6:
            return
        trace = make_trace(values, fs=1.0)
        once = minmax_normalize(trace)
        twice = minmax_normalize(once)
        np.testing.assert_allclose(twice.values, once.values, atol=1e-12)
        assert once.values.min() == 0.0 and once.values.max() == 1.0
        transformed = minmax_normalize(make_trace(scale * values + shift, fs=1.0))
        np.testing.assert_allclose(transformed.values, once.values, atol=1e-9)


class TestTraceCsv:
    def test_roundtrip(self, tmp_path):
        path = tmp_path / "eda.csv"
        path.write_text("time_s,value\n0.0,1.5\n0.5,2.5\n1.0,3.0\n", encoding="utf-8")
        trace = load_trace_csv(path, "d1", EDA, 2.0)
        np.testing.assert_allclose(trace.values, [1.5, 2.5, 3.0])
        assert trace.sample_rate == 2.0

    def test_bad_header(self, tmp_path):
        path = tmp_path / "eda.csv"
        path.write_text("t,v\n0,1\n", encoding="utf-8")
        with pytest.raises(SchemaError):
            load_trace_csv(path, "d1", EDA, 2.0)

    def test_non_numeric(self, tmp_path):
        path = tmp_path / "eda.csv"
        path.write_text("time_s,value\n0.0,abc\n", encoding="utf-8")
        with pytest.raises(SchemaError):
            load_trace_csv(path, "d1", EDA, 2.0)
