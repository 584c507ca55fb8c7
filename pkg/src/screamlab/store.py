"""Trace-set container (JSON sidecar + raw float32 matrix) and time-diversity averaging.

On disk a trace set ``<path>`` is two files:

* ``<path>.json``: UTF-8 metadata with exactly the :class:`TraceSetMeta` keys;
  plaintexts are a list of 32-char hex strings, the key a 32-char hex string or
  null.
* ``<path>.f32``: ``n_traces * trace_len`` little-endian IEEE-754 float32 values,
  row-major, no header.
"""

import json
import os
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_key, check_plaintexts, check_traces
from .exceptions import CorruptContainer, GroupingError, ShapeError, StorageError

ROLES = ("profiling", "attack", "ttest_setA", "ttest_setB")
META_KEYS = ("center_frequency", "sample_rate", "n_traces", "trace_len", "time_diversity_n",
             "plaintexts", "key", "role")


@dataclass(frozen=True, eq=False)
class TraceSetMeta:
    center_frequency: float
    sample_rate: float
    n_traces: int
    trace_len: int
    time_diversity_n: int
    plaintexts: np.ndarray
    key: np.ndarray | None = None
    role: str = "profiling"

    def __post_init__(self):
        if self.n_traces < 1:
            raise ShapeError("n_traces must be >= 1")
        if self.time_diversity_n < 1:
            raise ShapeError("time_diversity_n must be >= 1")
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        object.__setattr__(self, "plaintexts", check_plaintexts(self.plaintexts, self.n_traces))
        if self.key is not None:
            object.__setattr__(self, "key", check_key(self.key))

    def to_json_dict(self):
        return {
            "center_frequency": float(self.center_frequency),
            "sample_rate": float(self.sample_rate),
            "n_traces": int(self.n_traces),
            "trace_len": int(self.trace_len),
            "time_diversity_n": int(self.time_diversity_n),
            "plaintexts": [bytes(row).hex() for row in self.plaintexts],
            "key": None if self.key is None else bytes(self.key).hex(),
            "role": self.role,
        }

    @classmethod
    def from_json_dict(cls, d):
        missing = set(META_KEYS) - set(d)
        if missing:
            raise CorruptContainer(f"metadata lacks keys {sorted(missing)}")
        plaintexts = np.array([np.frombuffer(bytes.fromhex(h), dtype=np.uint8) for h in d["plaintexts"]])
        return cls(
            center_frequency=d["center_frequency"], sample_rate=d["sample_rate"],
            n_traces=d["n_traces"], trace_len=d["trace_len"],
            time_diversity_n=d["time_diversity_n"], plaintexts=plaintexts.reshape(-1, 16),
            key=None if d["key"] is None else bytes.fromhex(d["key"]), role=d["role"],
        )


@dataclass(frozen=True, eq=False)
class TraceSet:
    meta: TraceSetMeta
    traces: np.ndarray

    def __post_init__(self):
        X = check_traces(self.traces)
        if X.shape != (self.meta.n_traces, self.meta.trace_len):
            raise ShapeError(f"traces {X.shape} disagree with metadata "
                             f"({self.meta.n_traces}, {self.meta.trace_len})")
        object.__setattr__(self, "traces", X)

    @classmethod
    def from_arrays(cls, traces, plaintexts, *, center_frequency, sample_rate, time_diversity_n=1,
                    key=None, role="profiling"):
        X = check_traces(traces)
        meta = TraceSetMeta(center_frequency, sample_rate, X.shape[0], X.shape[1],
                            time_diversity_n, plaintexts, key, role)
        return cls(meta, X)

    @property
    def plaintexts(self):
        return self.meta.plaintexts

    @property
    def key(self):
        return self.meta.key

    def subset(self, rows, role=None):
        rows = np.asarray(rows)
        return TraceSet.from_arrays(
            self.traces[rows], self.plaintexts[rows], center_frequency=self.meta.center_frequency,
            sample_rate=self.meta.sample_rate, time_diversity_n=self.meta.time_diversity_n,
            key=self.key, role=role or self.meta.role)

    def without_key(self):
        return TraceSet(TraceSetMeta(self.meta.center_frequency, self.meta.sample_rate,
                                     self.meta.n_traces, self.meta.trace_len,
                                     self.meta.time_diversity_n, self.plaintexts, None,
                                     "attack"), self.traces)


def _paths(path):
    path = os.fspath(path)
    return path + ".json", path + ".f32"


def write_container(ts, path):
    """Write ``ts`` as ``<path>.json`` + ``<path>.f32``."""
    meta_path, data_path = _paths(path)
    try:
        with open(meta_path, "w", encoding="utf-8") as fh:
            json.dump(ts.meta.to_json_dict(), fh, indent=1)
            fh.write("\n")
        np.ascontiguousarray(ts.traces, dtype="<f4").tofile(data_path)
    except OSError as exc:
        raise StorageError(f"cannot write container {path}: {exc}") from exc


def read_container(path):
    meta_path, data_path = _paths(path)
    try:
        with open(meta_path, encoding="utf-8") as fh:
            d = json.load(fh)
        data = np.fromfile(data_path, dtype="<f4")
    except FileNotFoundError as exc:
        raise StorageError(f"missing container file: {exc.filename}") from exc
    except OSError as exc:
        raise StorageError(f"cannot read container {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CorruptContainer(f"{meta_path}: invalid JSON ({exc})") from exc
    meta = TraceSetMeta.from_json_dict(d)
    expected = meta.n_traces * meta.trace_len
    if data.size != expected:
        raise CorruptContainer(f"{data_path} holds {data.size} floats, metadata says {expected}")
    return TraceSet(meta, data.reshape(meta.n_traces, meta.trace_len).astype(np.float64))


def average_time_diversity(segments, n, plaintexts=None):
    """Average consecutive groups of ``n`` rows.

    When ``plaintexts`` (one row per segment) is given, every group must share a
    single plaintext.
    """
    S = np.atleast_2d(np.asarray(segments, dtype=np.float64))
    m = S.shape[0]
    if n < 1 or m % n:
        raise ShapeError(f"{m} segments cannot be split into groups of {n}")
    if plaintexts is not None:
        P = np.asarray(plaintexts).reshape(m // n, n, -1)
        if np.any(P != P[:, :1, :]):
            raise GroupingError("a time-diversity group mixes different plaintexts")
    return S.reshape(m // n, n, -1).mean(axis=1)


def write_iq(iq, path, center_frequency, extra=None):
    """Store an IQ capture as interleaved little-endian float32 plus a JSON sidecar."""
    meta_path, data_path = path + ".json", path + ".iq.f32"
    z = np.asarray(iq.samples)
    buf = np.empty(2 * z.size, dtype="<f4")
    buf[0::2] = z.real
    buf[1::2] = z.imag
    meta = {"format": "iq-interleaved-float32le", "sample_rate": iq.sample_rate,
            "center_frequency": float(center_frequency), "n_samples": int(z.size)}
    meta.update(extra or {})
    try:
        buf.tofile(data_path)
        with open(meta_path, "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=1, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise StorageError(f"cannot write IQ capture {path}: {exc}") from exc
    return meta


def read_iq(path):
    """Inverse of :func:`write_iq`; returns ``(IqTrace, metadata dict)``."""
    from .dsp import IqTrace

    meta_path, data_path = path + ".json", path + ".iq.f32"
    try:
        with open(meta_path, encoding="utf-8") as fh:
            meta = json.load(fh)
        buf = np.fromfile(data_path, dtype="<f4")
    except FileNotFoundError as exc:
        raise StorageError(f"missing IQ file: {exc.filename}") from exc
    if buf.size != 2 * meta.get("n_samples", buf.size // 2) or buf.size % 2:
        raise CorruptContainer(f"{data_path}: size does not match metadata")
    return IqTrace(buf[0::2] + 1j * buf[1::2], meta["sample_rate"]), meta


class TimeDiversityAverager(TransformerMixin, BaseEstimator):
    """Transformer averaging consecutive groups of ``n`` segments."""

    def __init__(self, n=10):
        self.n = n

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return average_time_diversity(X, self.n)
