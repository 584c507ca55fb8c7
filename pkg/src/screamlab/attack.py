"""Profiled correlation attack on the AES-128 first-round S-box output.

Profiling learns, for every key byte, one point of interest (the sample with the
largest between-class variance of the Hamming-weight class means) and the mean
leakage of each of the 9 Hamming-weight classes there. The attack correlates, for
each of the 256 byte hypotheses, the profiled class means predicted by that
hypothesis with the observed samples.
"""

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_key, check_plaintexts, check_traces
from .aes import HW, SBOX
from .exceptions import DegenerateAttackSet, InsufficientProfilingData, ShapeError

N_CLASSES = 9
MIN_CLASS_OCCUPANCY = 5
_CLAMP = 1.0 - 1e-6


class InsufficientDiscriminant(InsufficientProfilingData):
    """Profiling traces show no between-class variance at any sample."""


@dataclass(frozen=True, eq=False)
class Profile:
    frequency: float
    poi_index: np.ndarray  # (16,)
    class_means: np.ndarray  # (16, 9)
    class_counts: np.ndarray  # (16, 9)

    def to_dict(self):
        return {
            "frequency": float(self.frequency),
            "poi_index": [int(i) for i in self.poi_index],
            "class_means": np.asarray(self.class_means).tolist(),
            "class_counts": np.asarray(self.class_counts).astype(int).tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["frequency"]), np.asarray(d["poi_index"], dtype=np.int64),
                   np.asarray(d["class_means"], dtype=np.float64),
                   np.asarray(d["class_counts"], dtype=np.int64))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    scores: np.ndarray  # (n_bytes, 256) correlations
    logprobs: np.ndarray  # (n_bytes, 256), each row log-normalised
    n_traces: int = 0

    def best_key(self):
        return np.argmax(self.logprobs, axis=1).astype(np.uint8)

    def byte_ranks(self, key):
        """1-based rank of each correct byte within its row (ties pessimistic)."""
        key = np.asarray(key)
        correct = self.logprobs[np.arange(len(key)), key]
        return 1 + np.sum(self.logprobs > correct[:, None], axis=1)

    def to_dict(self):
        return {"n_traces": int(self.n_traces), "scores": self.scores.tolist(),
                "logprobs": self.logprobs.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["scores"], dtype=np.float64),
                   np.asarray(d["logprobs"], dtype=np.float64), int(d.get("n_traces", 0)))


def hw_classes(plaintexts, key):
    """Hamming-weight class of ``SBOX[p XOR k]`` for every trace and byte, ``(n, 16)``."""
    return HW[SBOX[np.bitwise_xor(plaintexts, key[None, :])]]


def profile_arrays(traces, plaintexts, key, frequency=0.0, min_class_count=1):
    X = check_traces(traces)
    P = check_plaintexts(plaintexts, X.shape[0])
    k = check_key(key)
    cls = hw_classes(P, k)
    n = X.shape[0]
    grand = X.mean(axis=0)
    pois = np.empty(16, dtype=np.int64)
    means = np.empty((16, N_CLASSES))
    counts = np.empty((16, N_CLASSES), dtype=np.int64)
    best_var = np.empty(16)
    for b in range(16):
        onehot = np.zeros((n, N_CLASSES))
        onehot[np.arange(n), cls[:, b]] = 1.0
        c = onehot.sum(axis=0)
        if np.any(c < min_class_count):
            empty = np.flatnonzero(c < min_class_count).tolist()
            raise InsufficientProfilingData(
                f"byte {b}: Hamming-weight classes {empty} have < {min_class_count} traces")
        mu = (onehot.T @ X) / c[:, None]
        between = (c[:, None] * (mu - grand) ** 2).sum(axis=0) / n
        pois[b] = int(np.argmax(between))
        best_var[b] = between[pois[b]]
        means[b] = mu[:, pois[b]]
        counts[b] = c.astype(np.int64)
    scale = max(float(np.var(X)), float(np.max(np.abs(X))) ** 2, 1e-300)
    if np.all(best_var <= 1e-20 * scale):
        raise InsufficientDiscriminant("no sample separates the Hamming-weight classes")
    return Profile(float(frequency), pois, means, counts)


def build_profile(ts, min_class_count=1):
    """Profile a :class:`~screamlab.store.TraceSet` recorded with a known key.

    Parameters
    ----------
    ts : TraceSet
        Profiling set; ``ts.key`` must be present.
    min_class_count : int
        Minimum number of traces every Hamming-weight class must hold.
    """
    if ts.key is None:
        raise InsufficientProfilingData("profiling set carries no key")
    if ts.meta.n_traces < N_CLASSES * MIN_CLASS_OCCUPANCY:
        raise InsufficientProfilingData(
            f"need >= {N_CLASSES * MIN_CLASS_OCCUPANCY} profiling traces, got {ts.meta.n_traces}")
    return profile_arrays(ts.traces, ts.plaintexts, ts.key, ts.meta.center_frequency,
                          min_class_count)


def scores_to_logprobs(scores, n_traces):
    """Fisher-z calibrated log-softmax over candidates (last axis).

    ``z = atanh(clip(score, +-(1 - 1e-6))) * sqrt(n_traces - 3)``
    """
    if n_traces <= 3:
        raise ValueError("scores_to_logprobs needs n_traces > 3")
    s = np.clip(np.asarray(scores, dtype=np.float64), -_CLAMP, _CLAMP)
    z = np.arctanh(s) * np.sqrt(n_traces - 3.0)
    return z - logsumexp(z, axis=-1, keepdims=True)


def attack_arrays(traces, plaintexts, profile):
    X = check_traces(traces, min_rows=4)
    P = check_plaintexts(plaintexts, X.shape[0])
    if np.max(profile.poi_index) >= X.shape[1]:
        raise ShapeError(f"profile POI {np.max(profile.poi_index)} beyond trace length {X.shape[1]}")
    cand = np.arange(256, dtype=np.uint8)
    scores = np.empty((16, 256))
    for b in range(16):
        obs = X[:, profile.poi_index[b]]
        o = obs - obs.mean()
        # predicted leakage for every hypothesis: (256, n)
        pred = profile.class_means[b][HW[SBOX[np.bitwise_xor(cand[:, None], P[None, :, b])]]]
        v = pred - pred.mean(axis=1, keepdims=True)
        vn = np.sqrt(np.einsum("ij,ij->i", v, v))
        if np.any(vn <= 1e-12 * max(np.abs(pred).max(), 1e-300)):
            raise DegenerateAttackSet(f"byte {b}: predicted leakage is constant for some hypothesis")
        on = np.sqrt(o @ o)
        scores[b] = np.clip((v @ o) / (vn * on), -1.0, 1.0) if on > 0 else 0.0
    return ScoreMatrix(scores, scores_to_logprobs(scores, X.shape[0]), X.shape[0])


def correlation_attack(ts, profile, strict_frequency=True):
    """Score all 256 hypotheses of every key byte on an attack :class:`TraceSet`."""
    if strict_frequency and ts.meta.center_frequency != profile.frequency:
        raise ValueError(f"attack set at {ts.meta.center_frequency} Hz, profile built at "
                         f"{profile.frequency} Hz")
    return attack_arrays(ts.traces, ts.plaintexts, profile)


class ProfiledCorrelationAttack(BaseEstimator):
    """Estimator wrapper: ``fit`` profiles, ``predict_log_proba`` scores key bytes.

    Parameters
    ----------
    min_class_count : int
        Minimum profiling traces per Hamming-weight class.
    n_bins : int
        Histogram bins used by :meth:`score` for key-rank estimation.
    """

    def __init__(self, min_class_count=1, n_bins=2048):
        self.min_class_count = min_class_count
        self.n_bins = n_bins

    def fit(self, X, plaintexts, key):
        self.profile_ = profile_arrays(X, plaintexts, key, min_class_count=self.min_class_count)
        self.poi_index_ = self.profile_.poi_index
        self.class_means_ = self.profile_.class_means
        self.class_counts_ = self.profile_.class_counts
        self.n_features_in_ = np.asarray(X).shape[1]
        return self

    def decision_function(self, X, plaintexts):
        check_is_fitted(self, "profile_")
        return attack_arrays(X, plaintexts, self.profile_).scores

    def predict_log_proba(self, X, plaintexts):
        check_is_fitted(self, "profile_")
        return attack_arrays(X, plaintexts, self.profile_).logprobs

    def predict(self, X, plaintexts):
        return np.argmax(self.predict_log_proba(X, plaintexts), axis=1).astype(np.uint8)

    def score(self, X, plaintexts, key):
        """Negative log2 key rank (higher is better, 0 means rank 1)."""
        from .keyrank import histogram_rank

        check_is_fitted(self, "profile_")
        m = attack_arrays(X, plaintexts, self.profile_)
        return -histogram_rank(m, check_key(key), self.n_bins).log2_estimate
