import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from screamlab.dsp import AmplitudeTrace, magnitude
from screamlab.exceptions import EstimationFailed, NoMatches, ShapeError, ZeroVariance
from screamlab.segmentation import (CpLength, PatternSegmenter, estimate_cp_length,
                                    extract_pattern, segment_by_pattern, vt_segment, vt_similarity)
from screamlab.simulator import (DeviceModel, NoiseModel, cp_starts, synth_cp_leakage,
                                 synth_raw_capture)

FS = 5e6
DEV = DeviceModel()
F2 = 2.528e9


def capture(dev=DEV, n=12, sigma=0.0, seed=0, lead=0.0, tail=0.0, f=F2, repeat=False):
    P = np.random.default_rng(seed).integers(0, 256, (1 if repeat else n, 16), dtype=np.uint8)
    P = np.repeat(P, n, axis=0) if repeat else P
    return magnitude(synth_raw_capture(dev, NoiseModel(sigma), [], f, P, seed=seed, lead_in=lead,
                                       tail=tail))


class TestVirtualTriggering:
    def test_integer_period(self):
        rows = vt_segment(np.arange(10.0), 5, 2)
        assert rows.tolist() == [[0, 1, 2, 3, 4], [5, 6, 7, 8, 9]]

    def test_fractional_period_rounds_half_even(self):
        rows = vt_segment(np.arange(10.0), 4.5, 2)
        assert rows.tolist() == [[0, 1, 2, 3], [4, 5, 6, 7]]

    def test_paper_scale(self):
        rows = vt_segment(np.zeros(250_000), CpLength(4350), 50)
        assert rows.shape == (50, 4350)

    def test_too_short(self):
        with pytest.raises(ShapeError):
            vt_segment(np.zeros(100), 30, 4)

    def test_identical_segments(self):
        assert vt_similarity(np.tile(np.arange(5.0), (6, 1))) == pytest.approx(1.0)

    def test_null_distribution(self):
        rng = np.random.default_rng(7)
        scores = [vt_similarity(rng.normal(size=(50, 4350))) for _ in range(200)]
        assert np.mean(np.abs(scores) < 0.1) > 0.99

    def test_noiseless_harmonic(self):
        raw = capture(n=50)
        assert vt_similarity(vt_segment(raw, DEV.period_samples, 50)) > 0.99

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.01, 100))
    def test_scale_invariant(self, a):
        raw = capture(n=10, sigma=0.3, seed=3)
        segs = vt_segment(raw, 4350, 10)
        assert vt_similarity(a * segs) == pytest.approx(vt_similarity(segs), abs=1e-9)

    def test_needs_two(self):
        with pytest.raises(ShapeError):
            vt_similarity(np.ones((1, 5)))


class TestEstimateCpLength:
    @pytest.mark.parametrize("gap, true", [(0.0, 4350.0), (0.1e-6, 4350.5)])
    def test_recovers_period_at_10db(self, gap, true):
        dev = DeviceModel(inter_cp_gap=gap)
        clean = capture(dev, n=100)
        sigma = np.sqrt(np.mean(clean.samples ** 2) / 10)  # 10 dB
        raw = capture(dev, n=100, sigma=sigma, seed=5)
        assert abs(estimate_cp_length(raw, 4350.0).samples_per_cp - true) <= 0.05

    def test_nominal_in_seconds(self):
        raw = capture(n=40)
        assert abs(estimate_cp_length(raw, 870e-6).samples_per_cp - 4350) <= 0.05

    def test_noise_fails(self):
        raw = AmplitudeTrace(np.abs(np.random.default_rng(0).normal(size=200_000)), FS)
        with pytest.raises(EstimationFailed):
            estimate_cp_length(raw, 4350.0)

    def test_too_short(self):
        with pytest.raises(EstimationFailed):
            estimate_cp_length(capture(n=3), 4350.0)


class TestPattern:
    def test_mean(self):
        p = extract_pattern([[1.0, 2.0], [3.0, 4.0]], 1e9)
        assert p.samples.samples.tolist() == [2.0, 3.0]

    def test_averaging_statistics(self):
        rng = np.random.default_rng(1)
        clean = np.sin(np.linspace(0, 20, 500))
        p = extract_pattern(clean + rng.normal(size=(50, 500)), 1e9)
        assert np.max(np.abs(p.samples.samples - clean)) < 3.5 / np.sqrt(50)

    def test_degenerate(self):
        with pytest.raises(ZeroVariance):
            extract_pattern(np.ones((3, 10)), 1e9)

    def test_matches_template(self):
        raw = capture(n=20)
        p = extract_pattern(vt_segment(raw, 4350, 20), F2)
        tmpl = synth_cp_leakage(DEV, np.zeros(16, np.uint8)).samples
        assert np.corrcoef(p.samples.samples, tmpl)[0, 1] > 0.999


class TestSegmentByPattern:
    def _pattern(self, dev=DEV):
        return extract_pattern(vt_segment(capture(dev, n=20), dev.period_samples, 20), F2, FS)

    def test_planted_offsets_noiseless(self):
        lead = 0.3 * DEV.cp_duration
        raw = capture(n=8, lead=lead, tail=lead, seed=11)
        segs, pos = segment_by_pattern(raw, self._pattern(), return_positions=True)
        truth = cp_starts(DEV, 8, lead)
        assert len(pos) == 8
        assert np.all(np.abs(pos - truth) <= 2)

    def test_noiseless_segments_agree(self):
        # one plaintext repeated, so any disagreement would come from misalignment
        lead = 0.3 * DEV.cp_duration
        segs = segment_by_pattern(capture(n=8, lead=lead, tail=lead, repeat=True), self._pattern())
        c = np.corrcoef(segs)
        assert c[np.triu_indices(8, 1)].min() > 0.999

    def test_planted_offsets_fractional_period(self):
        dev = DeviceModel(inter_cp_gap=0.1e-6)
        raw = capture(dev, n=10, sigma=0.1, seed=2, lead=100e-6, tail=100e-6)
        _, pos = segment_by_pattern(raw, self._pattern(dev), return_positions=True)
        assert np.all(np.abs(pos - cp_starts(dev, 10, 100e-6)) <= 2)

    def test_noise_gives_no_matches(self):
        raw = AmplitudeTrace(np.abs(np.random.default_rng(0).normal(size=60_000)), FS)
        with pytest.raises(NoMatches):
            segment_by_pattern(raw, self._pattern())

    def test_count_bound(self):
        raw = capture(n=6, sigma=0.2, seed=4)
        p = self._pattern()
        segs = segment_by_pattern(raw, p)
        assert segs.shape[0] <= len(raw) // len(p) + 1
        assert segs.shape[1] == len(p)

    def test_segmenter_estimator(self):
        lead = 0.25 * DEV.cp_duration
        seg = PatternSegmenter(n_segs=20).fit(capture(n=30, sigma=0.1, seed=1))
        assert abs(seg.cp_length_.samples_per_cp - 4350) < 0.05
        out = seg.transform(capture(n=5, sigma=0.1, seed=9, lead=lead, tail=lead))
        assert out.shape == (5, 4350)
        assert seg.get_params()["threshold"] == 0.5
