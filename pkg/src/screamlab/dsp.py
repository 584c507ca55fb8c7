"""Signal-processing primitives: magnitude, low-pass FIR, sliding correlation, peaks.

All functions are pure; the trace containers are immutable value objects.
"""

from dataclasses import dataclass

import numpy as np
from scipy import signal as _sps
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_positive, check_samples
from .exceptions import EmptyTrace, InvalidCutoff, ShapeError, ZeroVariance

DEFAULT_NUM_TAPS = 129


@dataclass(frozen=True, eq=False)
class IqTrace:
    """Complex baseband capture sampled at ``sample_rate`` Hz."""

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 1:
            raise ShapeError(f"IQ samples must be 1-D, got shape {s.shape}")
        if s.size == 0:
            raise EmptyTrace("IQ trace is empty")
        s = s.astype(np.complex128 if s.dtype != np.complex64 else np.complex64, copy=False)
        if not np.all(np.isfinite(s)):
            raise ValueError("IQ trace contains non-finite samples")
        check_positive(self.sample_rate, "sample_rate")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))

    def __len__(self):
        return self.samples.size


@dataclass(frozen=True, eq=False)
class AmplitudeTrace:
    """Real-valued trace (usually the magnitude of an :class:`IqTrace`)."""

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.dtype not in (np.float32, np.float64):
            s = s.astype(np.float64)
        s = check_samples(s, dtype=s.dtype)
        check_positive(self.sample_rate, "sample_rate")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))

    def __len__(self):
        return self.samples.size


def magnitude(t):
    """Return the sample-wise modulus ``sqrt(I**2 + Q**2)`` of an IQ trace."""
    if len(t.samples) == 0:
        raise EmptyTrace("cannot take the magnitude of an empty trace")
    return AmplitudeTrace(np.abs(t.samples), t.sample_rate)


def lowpass_taps(cutoff, sample_rate, num_taps=DEFAULT_NUM_TAPS):
    """Hamming-windowed sinc low-pass taps with unit DC gain.

    Parameters
    ----------
    cutoff : float
        -6 dB cutoff in Hz; must satisfy ``0 < cutoff < sample_rate / 2``.
    sample_rate : float
        Sampling rate in Hz.
    num_taps : int
        Odd filter length.
    """
    nyquist = sample_rate / 2.0
    if not 0 < cutoff < nyquist:
        raise InvalidCutoff(f"cutoff {cutoff} Hz must lie in (0, {nyquist}) Hz")
    if num_taps < 1 or num_taps % 2 == 0:
        raise ValueError(f"num_taps must be a positive odd integer, got {num_taps}")
    return _sps.firwin(num_taps, cutoff, window="hamming", fs=sample_rate)


def _apply_fir(x, taps):
    # mode="same" on an odd-length symmetric filter removes the (N-1)/2 group delay
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < 4 * taps.size:
        half = (taps.size - 1) // 2
        full = np.apply_along_axis(np.convolve, -1, x, taps, mode="full")
        return full[..., half:half + x.shape[-1]]
    return _sps.oaconvolve(x, taps.reshape((1,) * (x.ndim - 1) + (-1,)), mode="same", axes=-1)


def fir_lowpass(t, cutoff, num_taps=DEFAULT_NUM_TAPS):
    """Zero-phase FIR low-pass of an :class:`AmplitudeTrace`; length is preserved."""
    taps = lowpass_taps(cutoff, t.sample_rate, num_taps)
    return AmplitudeTrace(_apply_fir(t.samples, taps), t.sample_rate)


def lowpass_rows(X, cutoff, sample_rate, num_taps=DEFAULT_NUM_TAPS):
    """Apply :func:`fir_lowpass` independently to every row of ``X``."""
    taps = lowpass_taps(cutoff, sample_rate, num_taps)
    return _apply_fir(X, taps)


def pearson(a, b):
    """Pearson correlation coefficient of two equal-length sequences."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise ShapeError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 2:
        raise ShapeError("pearson needs at least 2 samples")
    da = a - a.mean()
    db = b - b.mean()
    sa = np.sqrt(np.dot(da, da))
    sb = np.sqrt(np.dot(db, db))
    scale = max(np.abs(a).max(), np.abs(b).max(), 1e-300)
    if sa <= 1e-12 * scale * np.sqrt(a.size) or sb <= 1e-12 * scale * np.sqrt(a.size):
        raise ZeroVariance("pearson: an input has zero variance")
    return float(np.clip(np.dot(da, db) / (sa * sb), -1.0, 1.0))


def sliding_correlation(signal, pattern):
    """Pearson correlation of ``pattern`` against every full-overlap window of ``signal``.

    ``out[i]`` correlates ``pattern`` with ``signal[i:i + len(pattern)]``. Windows with
    zero variance yield 0.
    """
    s = np.asarray(signal.samples, dtype=np.float64)
    p = np.asarray(pattern.samples, dtype=np.float64)
    m = p.size
    if m > s.size:
        raise ShapeError(f"pattern ({m}) longer than signal ({s.size})")
    if m < 2:
        raise ShapeError("pattern needs at least 2 samples")
    p0 = p - p.mean()
    p_norm = np.sqrt(np.dot(p0, p0))
    n_out = s.size - m + 1
    if p_norm == 0.0:
        return AmplitudeTrace(np.zeros(n_out), signal.sample_rate)

    s0 = s - s.mean()
    if m > 64:
        # overlap-add: much cheaper than one full-length FFT for long captures
        num = _sps.oaconvolve(s0, p0[::-1], mode="valid")
    else:
        num = _sps.correlate(s0, p0, mode="valid", method="direct")
    c1 = np.concatenate(([0.0], np.cumsum(s0)))
    c2 = np.concatenate(([0.0], np.cumsum(s0 * s0)))
    win_sum = c1[m:] - c1[:-m]
    win_sq = c2[m:] - c2[:-m]
    ss = np.maximum(win_sq - win_sum * win_sum / m, 0.0)

    # cumulative-sum round-off: treat windows this flat as constant
    floor = 1e-10 * m * max(float(np.mean(s0 * s0)), 1e-300)
    ok = ss > floor
    out = np.zeros(n_out)
    out[ok] = num[ok] / (np.sqrt(ss[ok]) * p_norm)
    return AmplitudeTrace(np.clip(out, -1.0, 1.0), signal.sample_rate)


def find_peaks(series, threshold, min_distance):
    """Greedy peak picking.

    Local maxima at or above ``threshold`` (edges compared to their single
    neighbour; a flat top reports its middle sample) are accepted in order of
    decreasing height whenever they lie at least ``min_distance`` samples from
    every peak already accepted. Returns indices sorted ascending.
    """
    if min_distance < 1:
        raise ValueError(f"min_distance must be >= 1, got {min_distance}")
    x = np.asarray(getattr(series, "samples", series), dtype=np.float64)
    if x.size == 0:
        return np.array([], dtype=np.int64)
    # padding lets the first and last samples qualify as maxima
    idx, _ = _sps.find_peaks(np.pad(x, 1, constant_values=-np.inf), height=threshold,
                             distance=min_distance)
    return (idx - 1).astype(np.int64)


class LowPassFilter(TransformerMixin, BaseEstimator):
    """Row-wise zero-phase FIR low-pass as a stateless transformer.

    Works on ``(n_traces, n_samples)`` arrays, so it can sit in a
    :class:`sklearn.pipeline.Pipeline` ahead of an attack.
    """

    def __init__(self, cutoff=550e3, sample_rate=5e6, num_taps=DEFAULT_NUM_TAPS):
        self.cutoff = cutoff
        self.sample_rate = sample_rate
        self.num_taps = num_taps

    def fit(self, X, y=None):
        self.taps_ = lowpass_taps(self.cutoff, self.sample_rate, self.num_taps)
        return self

    def transform(self, X):
        taps = lowpass_taps(self.cutoff, self.sample_rate, self.num_taps)
        return _apply_fir(np.atleast_2d(np.asarray(X, dtype=np.float64)), taps)
