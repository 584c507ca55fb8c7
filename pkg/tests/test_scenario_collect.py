import json

import numpy as np
import pytest

from screamlab.collect import SimulatedCollector, leaky_frequencies
from screamlab.exceptions import CollectionError, ConfigError
from screamlab.scenario import (CollectionPlan, Scenario, load_scenario, polluted_interferers,
                                wifi_interferers)
from screamlab.simulator import DeviceModel, envelope_peak, spectral_envelope

DEV = DeviceModel()


class TestScenario:
    def test_defaults(self):
        sc = Scenario()
        assert sc.time_diversity_n == 10
        assert sc.with_(noise={"mode": "wireless"}).time_diversity_n == 50
        assert sc.with_(collection={"time_diversity_n": 3}).time_diversity_n == 3
        assert len(sc.sweep) == 200

    def test_roundtrip(self, tmp_path):
        sc = Scenario(interferers=polluted_interferers(), seed=7).with_(
            noise={"mode": "wireless"}, collection={"segmentation": "aligned"})
        sc.dump(tmp_path / "s.json")
        assert load_scenario(tmp_path / "s.json").to_dict() == sc.to_dict()

    def test_partial_file(self, tmp_path):
        (tmp_path / "s.json").write_text(json.dumps({"seed": 3, "collection": {"n_attack": 50}}))
        sc = load_scenario(tmp_path / "s.json")
        assert sc.seed == 3 and sc.collection.n_attack == 50 and sc.collection.n_profile == 2000

    @pytest.mark.parametrize("d", [{"bogus": 1}, {"collection": {"n_atack": 5}},
                                   {"collection": {"segmentation": "magic"}},
                                   {"sweep": {"f_start": 2e9, "f_stop": 1e9, "f_step": 1e6}},
                                   {"noise": {"mode": "radio"}}])
    def test_rejects(self, d, tmp_path):
        (tmp_path / "s.json").write_text(json.dumps(d))
        with pytest.raises(ConfigError):
            load_scenario(tmp_path / "s.json")

    def test_unreadable(self, tmp_path):
        with pytest.raises(ConfigError):
            load_scenario(tmp_path / "missing.json")
        (tmp_path / "bad.json").write_text("{")
        with pytest.raises(ConfigError):
            load_scenario(tmp_path / "bad.json")

    def test_plan_validation(self):
        with pytest.raises(ConfigError):
            CollectionPlan(n_profile=0)

    def test_interferers(self):
        assert [s.center for s in wifi_interferers()] == [2.412e9, 2.437e9, 2.462e9]
        pol = polluted_interferers(DEV)
        for h in (DEV.harmonic_frequency(1), DEV.harmonic_frequency(2)):
            assert any(s.covers(h) for s in pol)
        assert not any(s.covers(DEV.harmonic_frequency(3)) for s in pol)


class TestCollector:
    def test_cp_length_calibration(self):
        col = SimulatedCollector(Scenario())
        assert abs(col.cp_length.samples_per_cp - DEV.period_samples) < 0.05

    def test_plaintexts_deterministic_and_role_separated(self):
        col = SimulatedCollector(Scenario(seed=4))
        a = col.plaintexts(2.5e9, 10, "profiling")
        np.testing.assert_array_equal(a, SimulatedCollector(Scenario(seed=4)).plaintexts(
            2.5e9, 10, "profiling"))
        assert not np.array_equal(a, col.plaintexts(2.5e9, 10, "attack"))
        assert not np.array_equal(a, col.plaintexts(2.5e9, 10, "profiling", block=1))

    def test_aligned_trace_set(self):
        col = SimulatedCollector(Scenario(), segmentation="aligned")
        ts = col.trace_set(2.528e9, 30, "profiling")
        lo, hi = DEV.first_round_window()
        assert ts.traces.shape == (30, hi - lo)
        assert bytes(ts.key) == DEV.key and ts.meta.time_diversity_n == 10
        again = SimulatedCollector(Scenario(), segmentation="aligned").trace_set(2.528e9, 30)
        assert again.traces.tobytes() == ts.traces.tobytes()
        assert col.trace_set(2.528e9, 5, "attack").key is None

    def test_pattern_matches_aligned(self):
        sc = Scenario(collection=CollectionPlan(chunk_cps=200))
        pat = SimulatedCollector(sc, cp_length=DEV.period_samples)
        ali = SimulatedCollector(sc, segmentation="aligned")
        P = pat.plaintexts(2.528e9, 40, "profiling")
        Xp, kept = pat.collect(2.528e9, P, "profiling")
        Xa, _ = ali.collect(2.528e9, P, "profiling")
        assert len(kept) >= 38
        # both pipelines average the same encryptions, so their mean traces agree closely
        c = np.corrcoef(Xp.mean(axis=0), Xa[kept].mean(axis=0))[0, 1]
        assert c > 0.99

    def test_idle_victim_fails_fast(self):
        col = SimulatedCollector(Scenario(), cps_enabled=False, cp_length=DEV.period_samples)
        with pytest.raises(CollectionError):
            col.trace_set(2.528e9, 20)

    def test_fixed_vs_fixed_separates(self):
        col = SimulatedCollector(Scenario(), segmentation="aligned")
        a, b = col.fixed_vs_fixed(2.528e9, 30)
        assert a.shape == b.shape == (30, np.diff(DEV.first_round_window())[0])
        d = col.describe()
        assert d["fixed_A"]["key"] != d["fixed_B"]["key"]

    def test_leaky_frequencies(self):
        f = np.arange(1.4e9, 3.4e9, 10e6)
        leaky = leaky_frequencies(DEV, f)
        assert np.all(spectral_envelope(DEV, leaky) >= 0.1 * envelope_peak(DEV))
        assert 0 < leaky.size < f.size
