"""Full-key rank from per-byte log-probabilities.

Histogram convolution gives guaranteed bounds on the position of the correct key
in the probability-ordered enumeration; exhaustive enumeration serves as the
oracle for small instances.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import OracleTooLarge, ShapeError

GREEN_LOG2 = 32.0  # brute force in minutes
BLUE_LOG2 = 35.0  # brute force in about an hour
ORACLE_LIMIT = 2 ** 24


@dataclass(frozen=True)
class RankResult:
    log2_lower: float
    log2_estimate: float
    log2_upper: float
    bins: int

    def __post_init__(self):
        if not self.log2_lower <= self.log2_estimate <= self.log2_upper:
            raise ValueError(f"inconsistent rank bounds {self}")

    @property
    def rank_class(self):
        return rank_class(self.log2_estimate)

    def to_dict(self):
        return {"log2_lower": self.log2_lower, "log2_estimate": self.log2_estimate,
                "log2_upper": self.log2_upper, "bins": self.bins, "class": self.rank_class,
                "ties": "lower bound counts ties optimistically, upper bound pessimistically"}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1)


def rank_class(log2_rank):
    """Brute-force cost class: green <= 2^32, blue <= 2^35, red beyond."""
    if log2_rank <= GREEN_LOG2:
        return "green"
    if log2_rank <= BLUE_LOG2:
        return "blue"
    return "red"


def _logprobs(m):
    lp = np.asarray(getattr(m, "logprobs", m), dtype=np.float64)
    if lp.ndim != 2 or lp.shape[0] < 1 or lp.shape[1] < 2:
        raise ShapeError(f"log-probability matrix must be (n_bytes, n_candidates), got {lp.shape}")
    if not np.all(np.isfinite(lp)):
        raise ValueError("log-probabilities must be finite")
    return lp


def _log2(x):
    return math.log2(x) if x > 0 else 0.0


def histogram_rank(m, correct_key, n_bins=2048):
    """Bound and estimate the rank of ``correct_key`` by histogram convolution.

    Every candidate log-probability is quantised into one of ``n_bins`` equal bins
    spanning the global range. A key whose summed bin index is at least ``n_bytes``
    above the correct key's is certainly more likely; one more than ``n_bytes``
    below is certainly less likely. The bounds follow from those two counts; the
    estimate counts keys in strictly higher summed bins plus half of the ties and
    is clamped into the bounds.
    """
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    lp = _logprobs(m)
    key = np.asarray(correct_key, dtype=np.int64)
    n_bytes, n_cand = lp.shape
    if key.shape != (n_bytes,):
        raise ShapeError(f"key must have {n_bytes} entries")
    lo, hi = float(lp.min()), float(lp.max())
    if hi > lo:
        idx = np.floor((lp - lo) / (hi - lo) * n_bins).astype(np.int64)
        idx = np.clip(idx, 0, n_bins - 1)
    else:
        idx = np.zeros(lp.shape, dtype=np.int64)
    key_bin = int(idx[np.arange(n_bytes), key].sum())
    lowest = key_bin - n_bytes + 1  # nothing below this ever matters

    # dist[j] counts partial keys whose summed bin index is offset + j
    dist = np.ones(1)
    offset = 0
    max_rest = int(idx.max(axis=1).sum())
    for b in range(n_bytes):
        row = idx[b]
        max_rest -= int(row.max())
        bins, counts = np.unique(row, return_counts=True)
        new = np.zeros(dist.size + int(bins[-1] - bins[0]))
        for v, c in zip(bins - bins[0], counts):
            new[v:v + dist.size] += c * dist
        offset += int(bins[0])
        # drop partial sums that cannot reach the lowest threshold of interest
        cut = lowest - max_rest - offset
        if cut > 0:
            new = new[cut:]
            offset += cut
        dist = new

    def count_at_least(q):
        j = max(q - offset, 0)
        return float(dist[j:].sum()) if j < dist.size else 0.0

    total = float(n_cand) ** n_bytes
    lower = 1.0 + count_at_least(key_bin + n_bytes)
    upper = max(count_at_least(lowest), 1.0)
    ties = count_at_least(key_bin) - count_at_least(key_bin + 1)
    estimate = 1.0 + count_at_least(key_bin + 1) + (ties - 1.0) / 2.0
    estimate = min(max(estimate, lower), upper)
    cap = _log2(total)
    return RankResult(min(_log2(lower), cap), min(_log2(estimate), cap), min(_log2(upper), cap),
                      int(n_bins))


def enumerate_rank_exact(m, correct_key, limit=ORACLE_LIMIT):
    """Exact rank ``1 + #{keys with strictly larger total log-probability}``.

    Returns ``(rank, ties)`` where ``ties`` counts other keys whose total equals
    the correct key's.
    """
    lp = _logprobs(m)
    key = np.asarray(correct_key, dtype=np.int64)
    n_bytes, n_cand = lp.shape
    if float(n_cand) ** n_bytes > limit:
        raise OracleTooLarge(f"keyspace {n_cand}^{n_bytes} exceeds the enumeration limit {limit}")
    target = float(sum(lp[b, key[b]] for b in range(n_bytes)))
    totals = lp[0]
    for b in range(1, n_bytes):
        totals = np.add.outer(totals, lp[b]).ravel()
    greater = int(np.count_nonzero(totals > target))
    ties = int(np.count_nonzero(totals == target)) - 1
    return greater + 1, ties
