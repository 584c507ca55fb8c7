"""Virtual Triggering and pattern-recognition segmentation of raw captures."""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.optimize import minimize_scalar
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import dsp
from .dsp import AmplitudeTrace
from .exceptions import EstimationFailed, NoMatches, ShapeError, ZeroVariance

SEGMENT_CUTOFF = 550e3
DEFAULT_PEAK_THRESHOLD = 0.5
MIN_DISTANCE_FRACTION = 0.8



@dataclass(frozen=True)
class CpLength:
    """Distance between two encryption starts, in (fractional) samples."""

    samples_per_cp: float

    def __post_init__(self):
        if not self.samples_per_cp > 1:
            raise ValueError(f"samples_per_cp must be > 1, got {self.samples_per_cp}")

    def __float__(self):
        return float(self.samples_per_cp)


@dataclass(frozen=True, eq=False)
class Pattern:
    samples: AmplitudeTrace
    source_frequency: float

    def __post_init__(self):
        if np.var(self.samples.samples) <= 0:
            raise ZeroVariance("pattern is degenerate (zero variance)")

    def __len__(self):
        return len(self.samples)


def _as_length(l):
    return float(l.samples_per_cp if isinstance(l, CpLength) else l)


def _samples(x):
    return np.asarray(getattr(x, "samples", x), dtype=np.float64)


def vt_segment(raw, l, n_segs):
    """Cut ``n_segs`` segments of ``floor(l)`` samples starting at ``round(i * l)``.

    Rounding is half-to-even, so ``l = 4.5`` places the second start at 4.
    """
    x = _samples(raw)
    L = _as_length(l)
    width = int(np.floor(L))
    if n_segs < 1:
        raise ShapeError("n_segs must be >= 1")
    starts = np.rint(np.arange(n_segs) * L).astype(np.int64)
    if starts[-1] + width > x.size:
        raise ShapeError(f"need {starts[-1] + width} samples for {n_segs} segments of "
                         f"{L:g}, capture has {x.size}")
    return sliding_window_view(x, width)[starts]


def vt_similarity(segments, split="interleaved"):
    """Correlation between the averages of two halves of a segment set.

    ``split="interleaved"`` compares even- and odd-indexed segments (leakage
    detection). ``split="halves"`` compares the first and second half of the
    segments in capture order; any error in the assumed period accumulates into a
    relative shift between those two averages, which is what makes it usable for
    period search.
    """
    S = np.atleast_2d(np.asarray(segments, dtype=np.float64))
    if S.shape[0] < 2:
        raise ShapeError("vt_similarity needs at least 2 segments")
    if split == "interleaved":
        a, b = S[0::2].mean(axis=0), S[1::2].mean(axis=0)
    elif split == "halves":
        h = S.shape[0] // 2
        a, b = S[:h].mean(axis=0), S[S.shape[0] - h:].mean(axis=0)
    else:
        raise ValueError(f"unknown split {split!r}")
    return dsp.pearson(a, b)


def _null_floor(width):
    # ~5 sigma of the correlation between two averages of independent noise
    return 5.0 / np.sqrt(max(width, 2))


def estimate_cp_length(raw, nominal, search_window=0.005, n_segs=None, tol=0.01,
                       coarse_step=0.5):
    """Recover the precise encryption period from a raw capture.

    Scans ``nominal * (1 +- search_window)`` (``nominal`` given in samples, or in
    seconds when ``raw`` carries a sample rate and ``nominal < 1``) on a
    ``coarse_step`` grid, then refines around the best cell with a bounded scalar
    search down to ``tol`` samples.

    Raises
    ------
    EstimationFailed
        If no period in the window produces a similarity above the noise floor.
    """
    x = _samples(raw)
    if nominal < 1 and hasattr(raw, "sample_rate"):
        nominal = nominal * raw.sample_rate
    lo, hi = nominal * (1 - search_window), nominal * (1 + search_window)
    max_segs = int((x.size - hi) // hi) + 1
    if max_segs < 4:
        raise EstimationFailed(f"capture holds only {max_segs} periods; need >= 4")
    n = max_segs if n_segs is None else min(n_segs, max_segs)
    n -= n % 2

    def score(L):
        try:
            return vt_similarity(vt_segment(x, L, n), split="halves")
        except ZeroVariance:
            return -1.0

    grid = np.arange(lo, hi + coarse_step / 2, coarse_step)
    coarse = np.array([score(L) for L in grid])
    best = int(np.argmax(coarse))
    if coarse[best] < _null_floor(int(np.floor(lo))):
        raise EstimationFailed(f"no periodic structure (best similarity {coarse[best]:.3f})")

    a = grid[max(best - 1, 0)]
    b = grid[min(best + 1, grid.size - 1)]
    res = minimize_scalar(lambda L: -score(L), bounds=(a, b), method="bounded",
                          options={"xatol": tol})
    L = float(res.x)
    # the bounded search assumes unimodality; never return worse than the coarse grid
    if score(L) < coarse[best]:
        L = float(grid[best])
    return CpLength(float(L))


def extract_pattern(segments, frequency, sample_rate=1.0):
    """Average of VT segments, used as the leakage pattern at ``frequency``."""
    S = np.atleast_2d(np.asarray(segments, dtype=np.float64))
    mean = S.mean(axis=0)
    if mean.size < 2 or np.ptp(mean) <= 1e-12 * max(np.abs(mean).max(), 1e-300):
        raise ZeroVariance("extracted pattern has zero variance")
    return Pattern(AmplitudeTrace(mean, sample_rate), float(frequency))


def match_positions(raw, pattern, threshold=DEFAULT_PEAK_THRESHOLD, min_distance=None,
                    prefilter_cutoff=None):
    """Steps 1-3 of pattern recognition: low-pass, sliding correlation, peak picking.

    Returns the cut positions (ascending) and the correlation values at them.
    """
    x = _samples(raw)
    fs = getattr(raw, "sample_rate", None)
    p = _samples(pattern.samples if isinstance(pattern, Pattern) else pattern)
    if p.size >= x.size:
        raise ShapeError(f"pattern ({p.size}) must be shorter than raw ({x.size})")
    if fs is not None:
        cutoff = fs / 4 if prefilter_cutoff is None else prefilter_cutoff
        x = dsp.lowpass_rows(x, cutoff, fs)
        p = dsp.lowpass_rows(p, cutoff, fs)
    corr = dsp.sliding_correlation(AmplitudeTrace(x, 1.0), AmplitudeTrace(p, 1.0)).samples
    if min_distance is None:
        min_distance = max(1, int(round(MIN_DISTANCE_FRACTION * p.size)))
    peaks = dsp.find_peaks(corr, threshold, min_distance)
    return peaks, corr[peaks]


def segment_by_pattern(raw, pattern, threshold=DEFAULT_PEAK_THRESHOLD, min_distance=None,
                       segment_cutoff=SEGMENT_CUTOFF, return_positions=False):
    """Cut one segment per pattern match, in temporal order.

    The raw trace is low-pass filtered at a quarter of its sample rate for matching;
    segments are cut from the unfiltered trace and then low-pass filtered at
    ``segment_cutoff`` (pass ``None`` to skip that last step).

    Raises
    ------
    NoMatches
        If no correlation peak reaches ``threshold``.
    """
    x = _samples(raw)
    fs = getattr(raw, "sample_rate", None)
    peaks, _ = match_positions(raw, pattern, threshold, min_distance)
    if peaks.size == 0:
        raise NoMatches(f"no correlation peak >= {threshold}")
    width = len(pattern)
    segs = x[peaks[:, None] + np.arange(width)[None, :]]
    if segment_cutoff is not None and fs is not None:
        segs = dsp.lowpass_rows(segs, segment_cutoff, fs)
    return (segs, peaks) if return_positions else segs


class PatternSegmenter(TransformerMixin, BaseEstimator):
    """Learn a leakage pattern from a raw capture by Virtual Triggering, then segment.

    ``fit`` expects a capture that starts at (or near) an encryption boundary and
    contains at least ``n_segs`` consecutive encryptions. ``transform`` returns
    the low-passed segments cut at every pattern match.

    Parameters
    ----------
    cp_length : float or CpLength
        Encryption period in samples; estimated around ``nominal`` when None.
    nominal : float
        Nominal period in samples for the estimation search.
    """

    def __init__(self, cp_length=None, nominal=4350.0, n_segs=50, threshold=DEFAULT_PEAK_THRESHOLD,
                 segment_cutoff=SEGMENT_CUTOFF, sample_rate=5e6, frequency=0.0):
        self.cp_length = cp_length
        self.nominal = nominal
        self.n_segs = n_segs
        self.threshold = threshold
        self.segment_cutoff = segment_cutoff
        self.sample_rate = sample_rate
        self.frequency = frequency

    def _trace(self, X):
        if isinstance(X, AmplitudeTrace):
            return X
        return AmplitudeTrace(np.ravel(np.asarray(X, dtype=np.float64)), self.sample_rate)

    def fit(self, X, y=None):
        raw = self._trace(X)
        if self.cp_length is None:
            self.cp_length_ = estimate_cp_length(raw, self.nominal)
        else:
            self.cp_length_ = CpLength(_as_length(self.cp_length))
        n = min(self.n_segs, int((len(raw) - np.floor(self.cp_length_.samples_per_cp))
                                 // self.cp_length_.samples_per_cp) + 1)
        segs = vt_segment(raw, self.cp_length_, n)
        self.pattern_ = extract_pattern(segs, self.frequency, raw.sample_rate)
        return self

    def transform(self, X):
        check_is_fitted(self, "pattern_")
        return segment_by_pattern(self._trace(X), self.pattern_, self.threshold,
                                  segment_cutoff=self.segment_cutoff)
