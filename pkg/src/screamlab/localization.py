"""Leakage localization over a frequency grid: fixed-vs-fixed t-test and pattern detection."""

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import GridMismatch, ScreamLabError, ShapeError
from .segmentation import vt_segment, vt_similarity

log = logging.getLogger(__name__)

TTEST_THRESHOLD = 4.5
PATTERN_THRESHOLD = 0.75
METHODS = ("ttest", "pattern")


@dataclass(frozen=True)
class SweepGrid:
    """``f_start, f_start + f_step, ...`` while below ``f_stop`` (at least one point)."""

    f_start: float
    f_stop: float
    f_step: float

    def __post_init__(self):
        if not self.f_step > 0:
            raise ValueError(f"f_step must be > 0, got {self.f_step}")
        if not self.f_start < self.f_stop:
            raise ValueError(f"f_start ({self.f_start}) must be < f_stop ({self.f_stop})")

    def __len__(self):
        return max(1, math.ceil((self.f_stop - self.f_start) / self.f_step - 1e-9))

    def points(self):
        return self.f_start + self.f_step * np.arange(len(self))

    def to_dict(self):
        return {"f_start": self.f_start, "f_stop": self.f_stop, "f_step": self.f_step}


@dataclass(frozen=True, eq=False)
class TTestResult:
    per_sample_t: np.ndarray
    max_abs_t: float


def welch_t(set_a, set_b):
    """Per-sample Welch t statistic between two trace matrices (unbiased variances).

    Samples where both sets have zero variance get ``t = 0``.
    """
    a = np.atleast_2d(np.asarray(set_a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(set_b, dtype=np.float64))
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ShapeError("welch_t needs at least 2 traces per set")
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"trace lengths differ: {a.shape[1]} vs {b.shape[1]}")
    diff = a.mean(axis=0) - b.mean(axis=0)
    se2 = a.var(axis=0, ddof=1) / a.shape[0] + b.var(axis=0, ddof=1) / b.shape[0]
    t = np.zeros_like(diff)
    ok = se2 > 0
    t[ok] = diff[ok] / np.sqrt(se2[ok])
    return TTestResult(t, float(np.max(np.abs(t))))


@dataclass(eq=False)
class SweepReport:
    grid: SweepGrid
    method: str
    scores: np.ndarray
    threshold: float
    warnings: list = field(default_factory=list)  # (frequency, reason)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.shape != (len(self.grid),):
            raise ShapeError(f"{self.scores.size} scores for a {len(self.grid)}-point grid")

    @property
    def frequencies(self):
        return self.grid.points()

    @property
    def detected(self):
        return self.scores >= self.threshold

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["frequency_hz", "score", "detected"])
        for f, s, d in zip(self.frequencies, self.scores, self.detected):
            w.writerow([f"{f:.1f}", f"{s:.6f}", int(d)])
        return buf.getvalue()

    def to_dict(self):
        return {
            "grid": self.grid.to_dict(), "method": self.method, "threshold": self.threshold,
            "frequency_hz": self.frequencies.tolist(), "scores": self.scores.tolist(),
            "detected": [bool(d) for d in self.detected],
            "warnings": [{"frequency_hz": f, "reason": r} for f, r in self.warnings],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(SweepGrid(**d["grid"]), d["method"], d["scores"], d["threshold"],
                   [(w["frequency_hz"], w["reason"]) for w in d.get("warnings", [])],
                   d.get("metadata", {}))

    def save(self, path_stem):
        """Write ``<stem>.csv`` and ``<stem>.json``."""
        with open(f"{path_stem}.csv", "w", encoding="utf-8") as fh:
            fh.write(self.to_csv())
        with open(f"{path_stem}.json", "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")


def _run_grid(fn, freqs, n_jobs):
    if n_jobs is None or n_jobs == 1 or len(freqs) == 1:
        return [fn(f) for f in freqs]
    from joblib import Parallel, delayed

    # results come back in submission order, so the report never depends on scheduling
    return Parallel(n_jobs=n_jobs)(delayed(fn)(f) for f in freqs)


def _safe(score_fn):
    def run(f):
        try:
            return float(score_fn(f)), None
        except ScreamLabError as exc:
            return 0.0, f"{type(exc).__name__}: {exc}"
    return run


class _TTestAt:
    def __init__(self, collector, n):
        self.collector, self.n = collector, n

    def __call__(self, f):
        a, b = self.collector.fixed_vs_fixed(f, self.n)
        return welch_t(a, b).max_abs_t


class _PatternAt:
    def __init__(self, collector, n_segs, n_tests):
        self.collector, self.n_segs, self.n_tests = collector, n_segs, n_tests

    def __call__(self, f):
        raw = self.collector.scan_capture(f, self.n_segs * self.n_tests)
        return pattern_detection_score(raw, self.collector.cp_length, self.n_segs, self.n_tests)


def _sweep(grid, method, fn, threshold, n_jobs, metadata):
    freqs = [float(f) for f in grid.points()]
    out = _run_grid(_safe(fn), freqs, n_jobs)
    warns = [(f, msg) for f, (_, msg) in zip(freqs, out) if msg is not None]
    for f, msg in warns:
        log.warning("%s sweep: %.0f Hz scored 0 (%s)", method, f, msg)
    return SweepReport(grid, method, [s for s, _ in out], threshold, warns, metadata)


def ttest_sweep(grid, collector, n_traces_per_set=250, threshold=TTEST_THRESHOLD, n_jobs=1):
    """Fixed-vs-fixed t-test score at every grid frequency.

    ``collector.fixed_vs_fixed(f, n)`` must return two segmented, averaged trace
    matrices; it is expected to extract a fresh pattern at every frequency.
    Frequencies where collection fails score 0 and are listed in ``warnings``.
    """
    meta = dict(getattr(collector, "describe", dict)())
    meta["n_traces_per_set"] = int(n_traces_per_set)
    return _sweep(grid, "ttest", _TTestAt(collector, n_traces_per_set), threshold, n_jobs, meta)


def pattern_detection_score(raw, l, n_segs=50, n_tests=10):
    """Mean even/odd VT similarity over ``n_tests`` consecutive blocks of ``n_segs`` segments."""
    if n_segs < 2 or n_tests < 1:
        raise ShapeError("need n_segs >= 2 and n_tests >= 1")
    segs = vt_segment(raw, l, n_segs * n_tests)
    scores = [vt_similarity(segs[i * n_segs:(i + 1) * n_segs], split="interleaved")
              for i in range(n_tests)]
    return float(np.mean(scores))


def pattern_sweep(grid, collector, n_segs=50, n_tests=10, threshold=PATTERN_THRESHOLD, n_jobs=1):
    """Pattern-detection score at every grid frequency.

    ``collector.scan_capture(f, n_cps)`` returns a raw amplitude capture holding
    ``n_cps`` consecutive encryptions; ``collector.cp_length`` is the period.
    """
    meta = dict(getattr(collector, "describe", dict)())
    meta.update(n_segs=int(n_segs), n_tests=int(n_tests))
    return _sweep(grid, "pattern", _PatternAt(collector, n_segs, n_tests), threshold, n_jobs, meta)


def compare_reports(a, b):
    """Fraction of grid points on which both reports make the same detection call."""
    if a.grid != b.grid:
        raise GridMismatch(f"grids differ: {a.grid} vs {b.grid}")
    return float(np.mean(a.detected == b.detected))
