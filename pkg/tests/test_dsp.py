import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from screamlab import dsp
from screamlab.dsp import AmplitudeTrace, IqTrace
from screamlab.exceptions import EmptyTrace, InvalidCutoff, ZeroVariance

FS = 5e6
finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def amp(x, fs=FS):
    return AmplitudeTrace(np.asarray(x, dtype=float), fs)


class TestMagnitude:
    def test_345(self):
        assert dsp.magnitude(IqTrace([3 + 4j], FS)).samples.tolist() == [5.0]

    def test_zero(self):
        assert dsp.magnitude(IqTrace([0j], FS)).samples.tolist() == [0.0]

    def test_hand_values(self):
        out = dsp.magnitude(IqTrace([1 + 1j, 2 + 0j], FS)).samples
        np.testing.assert_allclose(out, [1.41421356, 2.0], atol=1e-8)

    def test_empty_rejected(self):
        with pytest.raises(EmptyTrace):
            IqTrace([], FS)

    def test_keeps_rate_and_length(self):
        t = IqTrace(np.ones(7, complex), 123.0)
        m = dsp.magnitude(t)
        assert m.sample_rate == 123.0 and len(m) == 7

    def test_traces_are_read_only(self):
        t = amp([1.0, 2.0])
        with pytest.raises(ValueError):
            t.samples[0] = 5


def _rms(x):
    return np.sqrt(np.mean(np.square(x)))


class TestLowpass:
    def test_dc_gain(self):
        out = dsp.fir_lowpass(amp(np.full(1000, 3.7)), 550e3).samples
        np.testing.assert_allclose(out[64:-64], 3.7, atol=1e-6)

    def test_taps_unit_gain_and_symmetric(self):
        h = dsp.lowpass_taps(550e3, FS)
        assert h.size == 129
        assert abs(h.sum() - 1) < 1e-12
        np.testing.assert_allclose(h, h[::-1])

    def test_taps_are_windowed_sinc(self):
        # oracle: the textbook Hamming-windowed sinc, normalized to unit DC gain
        fc = 550e3 / FS
        n = np.arange(129) - 64
        ref = 2 * fc * np.sinc(2 * fc * n) * (0.54 - 0.46 * np.cos(2 * np.pi * np.arange(129) / 128))
        np.testing.assert_allclose(dsp.lowpass_taps(550e3, FS), ref / ref.sum(), atol=1e-15)

    @staticmethod
    def _gain(factor, cutoff=550e3):
        n = np.arange(4096)
        x = np.sin(2 * np.pi * factor * cutoff * n / FS)
        y = dsp.fir_lowpass(amp(x), cutoff).samples[200:-200]
        return _rms(y) / _rms(x[200:-200])

    def test_stopband_sine(self):
        assert self._gain(2.0) < 0.05

    def test_passband_sine(self):
        assert abs(self._gain(0.25) - 1) < 0.02

    def test_gain_matches_frequency_response(self):
        # oracle: |H(f)| from the DFT of the taps
        h = dsp.lowpass_taps(550e3, FS)
        for factor in (0.25, 0.5, 2.0):
            f = factor * 550e3
            H = abs(np.sum(h * np.exp(-2j * np.pi * f / FS * np.arange(h.size))))
            assert self._gain(factor) == pytest.approx(H, abs=5e-3)

    def test_zero_phase(self):
        x = np.zeros(801)
        x[400] = 1.0
        y = dsp.fir_lowpass(amp(x), 550e3).samples
        assert int(np.argmax(y)) == 400
        np.testing.assert_allclose(y[400 - 50:400], y[401:451][::-1], atol=1e-15)

    def test_short_and_long_paths_agree(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=600)
        taps = dsp.lowpass_taps(1.25e6, FS)
        direct = np.convolve(x, taps, mode="full")[64:64 + x.size]
        np.testing.assert_allclose(dsp.fir_lowpass(amp(x), 1.25e6).samples, direct, atol=1e-12)

    @pytest.mark.parametrize("cutoff", [0.0, -1.0, FS / 2, FS])
    def test_invalid_cutoff(self, cutoff):
        with pytest.raises(InvalidCutoff):
            dsp.fir_lowpass(amp(np.ones(10)), cutoff)

    def test_even_taps_rejected(self):
        with pytest.raises(ValueError):
            dsp.lowpass_taps(550e3, FS, 128)

    @settings(max_examples=50, deadline=None)
    @given(arrays(float, 300, elements=finite), arrays(float, 300, elements=finite),
           st.floats(-10, 10), st.floats(-10, 10))
    def test_linear(self, x, y, a, b):
        f = lambda v: dsp.fir_lowpass(amp(v), 550e3).samples  # noqa: E731
        lhs = f(a * x + b * y)
        rhs = a * f(x) + b * f(y)
        scale = max(1.0, np.abs(lhs).max(), np.abs(rhs).max())
        assert np.max(np.abs(lhs - rhs)) <= 1e-9 * scale

    def test_sample_rate_preserved(self):
        assert dsp.fir_lowpass(amp(np.ones(50), 1e6), 1e5).sample_rate == 1e6


class TestPearson:
    def test_identical(self):
        assert dsp.pearson([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0)

    def test_reversed(self):
        assert dsp.pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)

    def test_hand_value(self):
        # cov = 4, var_a = var_b = 5 (sums of centred products)
        assert dsp.pearson([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-12)

    def test_zero_variance(self):
        with pytest.raises(ZeroVariance):
            dsp.pearson([1, 1, 1], [1, 2, 3])

    @settings(max_examples=100, deadline=None)
    @given(arrays(float, 20, elements=finite), arrays(float, 20, elements=finite))
    def test_symmetric(self, a, b):
        try:
            r = dsp.pearson(a, b)
        except ZeroVariance:
            return
        assert r == pytest.approx(dsp.pearson(b, a), abs=1e-12)
        assert -1 <= r <= 1

    @settings(max_examples=100, deadline=None)
    @given(arrays(float, 20, elements=st.floats(-100, 100)),
           st.floats(0.01, 100) | st.floats(-100, -0.01), st.floats(-100, 100))
    def test_affine_sign(self, a, alpha, beta):
        if np.ptp(a) < 1e-3:
            return
        assert dsp.pearson(a, alpha * a + beta) == pytest.approx(np.sign(alpha), abs=1e-9)


class TestSlidingCorrelation:
    def test_self(self):
        p = amp([1, 3, 2, 5, 4])
        assert dsp.sliding_correlation(p, p).samples[0] == pytest.approx(1.0)

    def test_negation(self):
        p = np.array([1.0, 3, 2, 5, 4])
        out = dsp.sliding_correlation(amp(np.r_[-p, 0, 0]), amp(p)).samples
        assert out[0] == pytest.approx(-1.0)

    def test_locates_pattern(self):
        out = dsp.sliding_correlation(amp([0, 0, 1, 2, 1, 0]), amp([1, 2, 1])).samples
        assert out.size == 4
        assert int(np.argmax(out)) == 2

    def test_flat_window_gives_zero(self):
        out = dsp.sliding_correlation(amp([5, 5, 5, 5, 1, 2]), amp([1, 2, 3])).samples
        assert out[0] == 0.0 and out[1] == 0.0

    def test_matches_bruteforce_fft_path(self):
        rng = np.random.default_rng(4)
        s, p = rng.normal(size=3000), rng.normal(size=200)
        out = dsp.sliding_correlation(amp(s), amp(p)).samples
        ref = [np.corrcoef(s[i:i + 200], p)[0, 1] for i in range(0, 2801, 97)]
        np.testing.assert_allclose(out[::97], ref, atol=1e-9)

    @settings(max_examples=1000, deadline=None)
    @given(arrays(float, st.integers(8, 60), elements=finite), st.integers(2, 8))
    def test_bounded(self, s, m):
        out = dsp.sliding_correlation(amp(s), amp(s[:m][::-1] + np.arange(m))).samples
        assert np.all(np.isfinite(out))
        assert np.all(np.abs(out) <= 1.0)


class TestFindPeaks:
    def test_two_peaks(self):
        assert dsp.find_peaks([0, 1, 0, 1, 0], 0.5, 1).tolist() == [1, 3]

    def test_all_zero(self):
        assert dsp.find_peaks(np.zeros(10), 0.5, 1).tolist() == []

    def test_spacing_rule(self):
        assert dsp.find_peaks([0, 0.9, 0.8, 0, 0.7], 0.6, 2).tolist() == [1, 4]

    def test_greedy_by_height(self):
        # the taller peak at 3 suppresses its lower neighbour at 1
        assert dsp.find_peaks([0, 0.7, 0, 0.9, 0], 0.5, 3).tolist() == [3]

    def test_edges_can_be_peaks(self):
        assert dsp.find_peaks([0.9, 0.1, 0.2, 0.8], 0.5, 1).tolist() == [0, 3]

    def test_bad_distance(self):
        with pytest.raises(ValueError):
            dsp.find_peaks([1, 2], 0.0, 0)

    @settings(max_examples=200, deadline=None)
    @given(arrays(float, st.integers(1, 80), elements=st.floats(0, 1)), st.integers(1, 10))
    def test_spacing_and_threshold(self, x, d):
        idx = dsp.find_peaks(x, 0.5, d)
        assert np.all(np.diff(idx) >= d)
        assert np.all(x[idx] >= 0.5)

    @settings(max_examples=200, deadline=None)
    @given(arrays(float, st.integers(1, 60), elements=st.floats(0, 1), unique=True),
           st.integers(1, 8))
    def test_matches_greedy_reference(self, x, d):
        # reference: strict local maxima taken tallest first, skipping any within d of a kept one
        pad = np.concatenate(([-np.inf], x, [-np.inf]))
        cand = [i for i in range(x.size) if x[i] >= 0.3 and pad[i] < x[i] > pad[i + 2]]
        kept = []
        for i in sorted(cand, key=lambda i: -x[i]):
            if all(abs(i - k) >= d for k in kept):
                kept.append(i)
        assert dsp.find_peaks(x, 0.3, d).tolist() == sorted(kept)


def test_lowpass_transformer_matches_function():
    X = np.random.default_rng(1).normal(size=(3, 500))
    t = dsp.LowPassFilter(cutoff=550e3, sample_rate=FS).fit(X)
    np.testing.assert_allclose(t.transform(X), dsp.lowpass_rows(X, 550e3, FS))
    assert t.get_params()["cutoff"] == 550e3
