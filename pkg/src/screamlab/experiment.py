"""End-to-end experiments: per-frequency attacks and rank-vs-traces curves."""

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .attack import build_profile, correlation_attack
from .collect import SimulatedCollector
from .exceptions import ScreamLabError, SubsetError
from .keyrank import histogram_rank, rank_class
from .localization import _run_grid

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AttackOutcome:
    frequency: float
    log2_lower: float = float("nan")
    log2_rank: float = float("nan")
    log2_upper: float = float("nan")
    n_profile: int = 0
    n_attack: int = 0
    error: str = ""

    @property
    def ok(self):
        return not self.error

    @property
    def rank_class(self):
        return rank_class(self.log2_rank) if self.ok else "failed"


@dataclass
class AttackSweep:
    outcomes: list = field(default_factory=list)

    @property
    def frequencies(self):
        return np.array([o.frequency for o in self.outcomes])

    @property
    def log2_ranks(self):
        return np.array([o.log2_rank for o in self.outcomes])

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["frequency_hz", "log2_rank", "log2_lower", "log2_upper", "class", "n_profile",
                    "n_attack", "error"])
        for o in self.outcomes:
            w.writerow([f"{o.frequency:.1f}", f"{o.log2_rank:.4f}", f"{o.log2_lower:.4f}",
                        f"{o.log2_upper:.4f}", o.rank_class, o.n_profile, o.n_attack, o.error])
        return buf.getvalue()


class _AttackAt:
    def __init__(self, collector, n_profile, n_attack, n_bins):
        self.collector, self.n_profile, self.n_attack, self.n_bins = (
            collector, n_profile, n_attack, n_bins)

    def __call__(self, f):
        c = self.collector
        try:
            prof = c.trace_set(f, self.n_profile, "profiling")
            att = c.trace_set(f, self.n_attack, "attack")
            m = correlation_attack(att, build_profile(prof))
            r = histogram_rank(m, np.frombuffer(c.device.key, dtype=np.uint8), self.n_bins)
        except ScreamLabError as exc:
            log.warning("attack at %.0f Hz failed: %s", f, exc)
            return AttackOutcome(f, error=f"{type(exc).__name__}: {exc}")
        return AttackOutcome(f, r.log2_lower, r.log2_estimate, r.log2_upper, prof.meta.n_traces,
                             att.meta.n_traces)


def run_attack_sweep(scenario, grid=None, n_profile=None, n_attack=None, n_jobs=1, n_bins=2048,
                     collector=None):
    """Collect, profile, attack and rank at every grid frequency.

    Failures (for instance segmentation finding nothing) are recorded per
    frequency with their reason and do not stop the run.
    """
    grid = grid if grid is not None else scenario.sweep
    n_profile = n_profile or scenario.collection.n_profile
    n_attack = n_attack or scenario.collection.n_attack
    collector = collector or SimulatedCollector(scenario)
    freqs = [float(f) for f in (grid.points() if hasattr(grid, "points") else grid)]
    if collector.segmentation == "pattern":
        collector.cp_length  # calibrate once before fanning out
    return AttackSweep(_run_grid(_AttackAt(collector, n_profile, n_attack, n_bins), freqs, n_jobs))


@dataclass
class RankCurve:
    """Log2 ranks per (frequency, trace count, repeat) with summary statistics."""

    frequencies: np.ndarray
    counts: np.ndarray
    log2_ranks: np.ndarray  # (n_freq, n_counts, repeats), NaN where the attack failed

    def quantiles(self):
        """``(n_freq, n_counts, 3)`` array of first quartile, median and third quartile."""
        with np.errstate(all="ignore"):
            q = np.nanpercentile(self.log2_ranks, [25, 50, 75], axis=2)
        return np.moveaxis(q, 0, -1)

    @property
    def median(self):
        return self.quantiles()[..., 1]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["frequency_hz", "n_traces", "q1", "median", "q3", "min", "max", "repeats"])
        q = self.quantiles()
        for i, f in enumerate(self.frequencies):
            for j, n in enumerate(self.counts):
                r = self.log2_ranks[i, j]
                w.writerow([f"{f:.1f}", int(n), f"{q[i, j, 0]:.4f}", f"{q[i, j, 1]:.4f}",
                            f"{q[i, j, 2]:.4f}", f"{np.nanmin(r):.4f}", f"{np.nanmax(r):.4f}",
                            int(np.sum(np.isfinite(r)))])
        return buf.getvalue()


class _CurveAt:
    def __init__(self, collector, counts, repeats, n_profile, n_bins):
        self.collector, self.counts, self.repeats = collector, counts, repeats
        self.n_profile, self.n_bins = n_profile, n_bins

    def __call__(self, f):
        c = self.collector
        out = np.full((len(self.counts), self.repeats), np.nan)
        try:
            profile = build_profile(c.trace_set(f, self.n_profile, "profiling"))
            pool = c.trace_set(f, max(self.counts) * self.repeats, "attack")
        except ScreamLabError as exc:
            log.warning("rank curve at %.0f Hz failed: %s", f, exc)
            return out
        key = np.frombuffer(c.device.key, dtype=np.uint8)
        for j, n in enumerate(self.counts):
            if n * self.repeats > pool.meta.n_traces:
                raise SubsetError(f"{self.repeats} disjoint subsets of {n} traces need "
                                  f"{n * self.repeats}, only {pool.meta.n_traces} collected at {f:.0f} Hz")
            for r in range(self.repeats):
                sub = pool.subset(np.arange(r * n, (r + 1) * n))
                try:
                    out[j, r] = histogram_rank(correlation_attack(sub, profile), key,
                                               self.n_bins).log2_estimate
                except ScreamLabError as exc:
                    log.warning("attack %d/%d traces at %.0f Hz failed: %s", r, n, f, exc)
        return out


def rank_vs_traces(scenario, frequencies, counts, repeats=20, n_profile=None, n_jobs=1,
                   n_bins=2048, collector=None):
    """Key-rank distribution against attack-set size.

    For every frequency one profile is built and one attack pool of
    ``max(counts) * repeats`` traces is collected; repeat ``r`` at count ``n``
    attacks the disjoint block ``[r * n, (r + 1) * n)`` of that pool.
    """
    if repeats < 1:
        raise SubsetError("repeats must be >= 1")
    counts = np.asarray(sorted(int(c) for c in counts))
    if counts.size == 0 or counts[0] < 4:
        raise SubsetError("trace counts must be >= 4")
    n_profile = n_profile or scenario.collection.n_profile
    collector = collector or SimulatedCollector(scenario)
    freqs = [float(f) for f in frequencies]
    if collector.segmentation == "pattern":
        collector.cp_length
    ranks = _run_grid(_CurveAt(collector, counts, repeats, n_profile, n_bins), freqs, n_jobs)
    return RankCurve(np.asarray(freqs), counts, np.stack(ranks))
