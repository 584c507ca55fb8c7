import json
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from screamlab.dsp import IqTrace
from screamlab.exceptions import CorruptContainer, GroupingError, ShapeError, StorageError
from screamlab.store import (META_KEYS, TimeDiversityAverager, TraceSet, average_time_diversity,
                             read_container, read_iq, write_container, write_iq)

KEY = bytes.fromhex("000102030405060708090a0b0c0d0e0f")


def make_set(X, key=KEY, role="profiling"):
    X = np.atleast_2d(np.asarray(X, dtype=np.float32))
    P = np.arange(X.shape[0] * 16, dtype=np.uint8).reshape(-1, 16)
    return TraceSet.from_arrays(X, P, center_frequency=2.528e9, sample_rate=5e6,
                                time_diversity_n=10, key=key, role=role)


class TestContainer:
    def test_file_size(self, tmp_path):
        write_container(make_set([[0, 1, 2, 3]]), tmp_path / "t")
        assert os.path.getsize(tmp_path / "t.f32") == 16
        assert np.fromfile(tmp_path / "t.f32", dtype="<f4").tolist() == [0, 1, 2, 3]

    def test_roundtrip_bit_exact(self, tmp_path):
        X = np.random.default_rng(0).normal(size=(5, 33)).astype(np.float32)
        ts = make_set(X)
        write_container(ts, tmp_path / "t")
        back = read_container(tmp_path / "t")
        assert back.traces.astype(np.float32).tobytes() == X.tobytes()
        assert back.meta.to_json_dict() == ts.meta.to_json_dict()

    def test_key_hex(self, tmp_path):
        write_container(make_set([[1.0, 2.0]]), tmp_path / "t")
        meta = json.loads((tmp_path / "t.json").read_text())
        assert meta["key"] == KEY.hex() and len(meta["key"]) == 32
        assert set(meta) == set(META_KEYS)

    def test_attack_set_has_null_key(self, tmp_path):
        write_container(make_set([[1.0, 2.0]], key=None, role="attack"), tmp_path / "t")
        assert json.loads((tmp_path / "t.json").read_text())["key"] is None
        assert read_container(tmp_path / "t").key is None

    def test_size_mismatch(self, tmp_path):
        write_container(make_set([[1.0, 2.0, 3.0]]), tmp_path / "t")
        with open(tmp_path / "t.f32", "ab") as fh:
            fh.write(b"\0\0\0\0")
        with pytest.raises(CorruptContainer):
            read_container(tmp_path / "t")

    def test_missing_file(self, tmp_path):
        with pytest.raises(StorageError):
            read_container(tmp_path / "nope")

    def test_unwritable(self, tmp_path):
        with pytest.raises(StorageError):
            write_container(make_set([[1.0]]), tmp_path / "no" / "dir" / "t")

    def test_meta_invariants(self):
        with pytest.raises(ShapeError):
            TraceSet.from_arrays(np.ones((2, 3)), np.zeros((3, 16), np.uint8), center_frequency=1,
                                 sample_rate=1)
        with pytest.raises(ValueError):
            make_set([[1.0]], role="bogus")

    @settings(max_examples=30, deadline=None,
              suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(arrays(np.float32, st.tuples(st.integers(1, 5), st.integers(1, 20)),
                  elements=st.floats(-1e6, 1e6, width=32)))
    def test_roundtrip_property(self, tmp_path, X):
        write_container(make_set(X), tmp_path / "p")
        assert read_container(tmp_path / "p").traces.astype(np.float32).tobytes() == X.tobytes()


class TestIq:
    def test_roundtrip(self, tmp_path):
        z = (np.arange(6) + 1j * np.arange(6)[::-1]).astype(np.complex64)
        write_iq(IqTrace(z, 5e6), str(tmp_path / "c"), 2.5e9, {"seed": 1})
        back, meta = read_iq(str(tmp_path / "c"))
        np.testing.assert_array_equal(back.samples, z)
        assert meta["seed"] == 1 and meta["center_frequency"] == 2.5e9

    def test_interleaving(self, tmp_path):
        write_iq(IqTrace(np.array([1 + 2j, 3 + 4j]), 1.0), str(tmp_path / "c"), 0.0)
        assert np.fromfile(tmp_path / "c.iq.f32", dtype="<f4").tolist() == [1, 2, 3, 4]


class TestAveraging:
    def test_mean(self):
        np.testing.assert_array_equal(average_time_diversity([[2.0], [4.0]], 2), [[3.0]])

    def test_identity(self):
        X = np.random.default_rng(1).normal(size=(4, 7))
        np.testing.assert_array_equal(average_time_diversity(X, 1), X)

    def test_not_divisible(self):
        with pytest.raises(ShapeError):
            average_time_diversity(np.ones((5, 2)), 2)

    def test_mixed_plaintexts(self):
        P = np.zeros((4, 16), np.uint8)
        P[1, 0] = 1
        with pytest.raises(GroupingError):
            average_time_diversity(np.ones((4, 2)), 2, P)
        average_time_diversity(np.ones((4, 2)), 2, np.zeros((4, 16), np.uint8))

    def test_noise_reduction(self):
        rng = np.random.default_rng(2)
        clean = np.sin(np.linspace(0, 6, 10_000))
        noisy = clean + rng.normal(0, 1.0, (10, clean.size))
        avg = average_time_diversity(noisy, 10)[0]
        assert np.all(np.abs(avg - clean) < 3 / np.sqrt(10) * 1.6)  # 10^4 samples: allow 4.8 sigma
        assert np.var(avg - clean) == pytest.approx(1 / 10, rel=0.2)

    def test_transformer(self):
        X = np.arange(12.0).reshape(4, 3)
        np.testing.assert_array_equal(TimeDiversityAverager(2).fit_transform(X),
                                      average_time_diversity(X, 2))
