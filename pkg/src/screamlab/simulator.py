"""Synthetic mixed-signal victim.

The victim's digital leakage is a per-encryption waveform (fixed template plus
Hamming-weight bumps at the first-round S-box points of interest). Around the
radio carrier the leakage reappears at ``f_rf + n * f_clk`` with amplitude
``A_n``; a Gaussian spreading kernel stands in for the substrate filtering that
smears each harmonic over neighbouring frequencies. Captures are synthesised
directly at 5 MHz complex baseband for one tested frequency at a time.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ._validation import check_key, check_plaintexts
from .aes import HW, aes_intermediate, hamming_weight
from .dsp import AmplitudeTrace, IqTrace

DEFAULT_HARMONIC_AMPS = {1: 1.0, 2: 0.8, 3: 0.5, 4: 0.3, -1: 1.0, -2: 0.8, -3: 0.5, -4: 0.3}
DEFAULT_KEY = bytes.fromhex("2b7e151628aed2a6abf7158809cf4f3c")

# leakage per unit of Hamming weight, relative to the template's unit baseline
HW_LEAK_SCALE = 0.05
POI_WIDTH = 0.6e-6  # Gaussian sigma of each data-dependent bump, seconds
# POIs sit in the first-round window, as fractions of the encryption duration
POI_FIRST = 0.02
POI_LAST = 0.14
FIRST_ROUND_END = 0.16

_TEMPLATE_SEED = 0x5C2EA3
_BUMP_DENSITY = 1.0 / 4e-6  # template micro-structure bumps per second
_ROUNDS = 10


@dataclass(frozen=True, eq=False)
class DeviceModel:
    """Ground-truth victim parameters (frequencies in Hz, durations in seconds)."""

    f_clk: float = 64e6
    f_rf: float = 2.4e9
    harmonic_amps: dict = field(default_factory=lambda: dict(DEFAULT_HARMONIC_AMPS))
    kernel_width: float = 24e6
    leak_gain: float = 1.0
    cp_duration: float = 870e-6
    inter_cp_gap: float = 0.0
    key: bytes = DEFAULT_KEY
    sample_rate: float = 5e6
    carrier_leak: float = 0.0

    def __post_init__(self):
        if not self.f_clk > 0:
            raise ValueError("f_clk must be > 0")
        if not self.f_rf > self.f_clk:
            raise ValueError("f_rf must exceed f_clk")
        amps = {int(n): float(a) for n, a in dict(self.harmonic_amps).items()}
        if any(a < 0 for a in amps.values()):
            raise ValueError("harmonic amplitudes must be >= 0")
        if not self.kernel_width > 0:
            raise ValueError("kernel_width must be > 0")
        if not self.cp_duration > 0:
            raise ValueError("cp_duration must be > 0")
        if self.inter_cp_gap < 0:
            raise ValueError("inter_cp_gap must be >= 0")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be > 0")
        object.__setattr__(self, "harmonic_amps", amps)
        object.__setattr__(self, "key", bytes(check_key(self.key)))

    @property
    def samples_per_cp(self):
        return self.cp_duration * self.sample_rate

    @property
    def period_samples(self):
        """Exact (possibly fractional) distance between encryption starts, in samples."""
        return (self.cp_duration + self.inter_cp_gap) * self.sample_rate

    @property
    def cp_samples(self):
        return int(round(self.samples_per_cp))

    def harmonic_frequency(self, n):
        return self.f_rf + n * self.f_clk

    def poi_times(self):
        """Times (s, from encryption start) of the 16 data-dependent bumps."""
        return self.cp_duration * np.linspace(POI_FIRST, POI_LAST, 16)

    def poi_samples(self):
        return np.rint(self.poi_times() * self.sample_rate).astype(int)

    def first_round_window(self):
        """Sample window ``(start, stop)`` covering every POI."""
        return 0, int(np.ceil(FIRST_ROUND_END * self.samples_per_cp))

    def to_dict(self):
        return {
            "f_clk": self.f_clk,
            "f_rf": self.f_rf,
            "harmonic_amps": {str(n): a for n, a in sorted(self.harmonic_amps.items())},
            "kernel_width": self.kernel_width,
            "leak_gain": self.leak_gain,
            "cp_duration": self.cp_duration,
            "inter_cp_gap": self.inter_cp_gap,
            "key": self.key.hex(),
            "sample_rate": self.sample_rate,
            "carrier_leak": self.carrier_leak,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "harmonic_amps" in d:
            d["harmonic_amps"] = {int(n): float(a) for n, a in d["harmonic_amps"].items()}
        if isinstance(d.get("key"), str):
            d["key"] = bytes.fromhex(d["key"])
        return cls(**d)


@dataclass(frozen=True)
class InterferenceSource:
    """Band-limited emitter; ``power`` is relative to :func:`peak_leak_power`."""

    center: float
    bandwidth: float
    power: float

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("interferer bandwidth must be > 0")
        if self.power < 0:
            raise ValueError("interferer power must be >= 0")

    def covers(self, f):
        return abs(f - self.center) < self.bandwidth / 2


@dataclass(frozen=True)
class NoiseModel:
    awgn_sigma: float = 0.0
    mode: str = "wired"
    wireless_factor: float = 10.0

    def __post_init__(self):
        if self.awgn_sigma < 0:
            raise ValueError("awgn_sigma must be >= 0")
        if self.mode not in ("wired", "wireless"):
            raise ValueError(f"noise mode must be 'wired' or 'wireless', got {self.mode!r}")

    @property
    def sigma(self):
        return self.awgn_sigma * (self.wireless_factor if self.mode == "wireless" else 1.0)


def make_rng(seed, *stream):
    """Counter-based (Philox) generator for an independent stream of ``seed``."""
    words = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(s) & 0xFFFFFFFFFFFFFFFF for s in stream]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))


def spectral_envelope(dev, f):
    """Leakage gain at tested frequency ``f`` (scalar or array).

    ``leak_gain * sum_n A_n * exp(-(f - f_rf - n f_clk)**2 / (2 kernel_width**2))``
    """
    f = np.asarray(f, dtype=np.float64)
    total = np.zeros_like(f)
    for n, a in dev.harmonic_amps.items():
        if a == 0.0:
            continue
        d = (f - dev.f_rf - n * dev.f_clk) / dev.kernel_width
        total = total + a * np.exp(-0.5 * d * d)
    total = dev.leak_gain * total
    return float(total) if total.ndim == 0 else total


def envelope_peak(dev):
    """Largest envelope value, searched around every harmonic."""
    if not dev.harmonic_amps or max(dev.harmonic_amps.values()) == 0:
        return 0.0
    centers = np.array([dev.harmonic_frequency(n) for n in dev.harmonic_amps])
    offs = np.linspace(-dev.kernel_width, dev.kernel_width, 401)
    return float(np.max(spectral_envelope(dev, (centers[:, None] + offs).ravel())))


@lru_cache(maxsize=16)
def _template_params(cp_duration):
    rng = np.random.default_rng(_TEMPLATE_SEED)
    n = max(1, int(round(cp_duration * _BUMP_DENSITY)))
    centers = rng.uniform(0.0, cp_duration, n)
    widths = rng.uniform(0.3e-6, 1.2e-6, n)
    amps = rng.uniform(-0.6, 0.6, n)
    return centers, widths, amps


def _gauss_sum(t, centers, widths, amps):
    # sums Gaussians over a +-6 sigma neighbourhood only
    out = np.zeros_like(t)
    if t.size == 0:
        return out
    dt = t[1] - t[0] if t.size > 1 else 1.0
    t0 = t[0]
    for c, w, a in zip(centers, widths, amps):
        lo = max(0, int(np.floor((c - 6 * w - t0) / dt)))
        hi = min(t.size, int(np.ceil((c + 6 * w - t0) / dt)) + 1)
        if lo >= hi:
            continue
        d = (t[lo:hi] - c) / w
        out[lo:hi] += a * np.exp(-0.5 * d * d)
    return out


def base_waveform(cp_duration, t):
    """Data-independent encryption envelope at times ``t`` (s); zero outside the run."""
    t = np.asarray(t, dtype=np.float64)
    inside = (t >= 0) & (t < cp_duration)
    rounds = 0.5 * np.sin(np.pi * _ROUNDS * t / cp_duration) ** 2
    micro = _gauss_sum(t, *_template_params(cp_duration))
    return np.where(inside, 1.0 + rounds + micro, 0.0)


def poi_profiles(dev, t):
    """``(16, len(t))`` unit bumps at the POIs, zero outside the encryption."""
    t = np.asarray(t, dtype=np.float64)
    d = (t[None, :] - dev.poi_times()[:, None]) / POI_WIDTH
    g = np.exp(-0.5 * d * d)
    g[:, (t < 0) | (t >= dev.cp_duration)] = 0.0
    return g


def leakage_hw(dev, plaintexts):
    """Hamming weights ``HW(SBOX[p XOR k])`` for each plaintext row, shape ``(n, 16)``."""
    P = check_plaintexts(plaintexts)
    k = np.frombuffer(dev.key, dtype=np.uint8)
    return HW[aes_intermediate(P, k[None, :])].astype(np.float64)


def leakage_waveforms(dev, plaintexts, t):
    """Noiseless unit-gain leakage for each plaintext sampled at times ``t``."""
    base = base_waveform(dev.cp_duration, t)
    return base[None, :] + HW_LEAK_SCALE * leakage_hw(dev, plaintexts) @ poi_profiles(dev, t)


def synth_cp_leakage(dev, plaintext):
    """Deterministic single-encryption leakage (unit spectral gain)."""
    t = np.arange(dev.cp_samples) / dev.sample_rate
    w = leakage_waveforms(dev, np.asarray(plaintext, dtype=np.uint8).reshape(1, 16), t)[0]
    return AmplitudeTrace(w, dev.sample_rate)


def template_peak(dev):
    """Upper bound on the leakage waveform (all Hamming weights at 8)."""
    t = np.arange(dev.cp_samples) / dev.sample_rate
    return float(np.max(base_waveform(dev.cp_duration, t) + 8 * HW_LEAK_SCALE * poi_profiles(dev, t).sum(0)))


def peak_leak_power(dev):
    """Reference power for interferers: squared peak leakage amplitude over all frequencies."""
    return (envelope_peak(dev) * template_peak(dev)) ** 2


def capture_length(dev, n_cps, lead_in=0.0, tail=0.0):
    if n_cps == 0:
        return int(np.ceil((lead_in + tail) * dev.sample_rate)) or 1
    last_start = lead_in * dev.sample_rate + (n_cps - 1) * dev.period_samples
    return int(np.ceil(last_start + dev.samples_per_cp + tail * dev.sample_rate))


def cp_starts(dev, n_cps, lead_in=0.0):
    """Exact (fractional) sample positions at which each encryption starts."""
    return lead_in * dev.sample_rate + np.arange(n_cps) * dev.period_samples


def _leakage_stream(dev, plaintexts, length, lead_in):
    out = np.zeros(length)
    starts = cp_starts(dev, len(plaintexts), lead_in)
    base_idx = np.floor(starts).astype(np.int64)
    fracs = np.round(starts - base_idx, 9)
    width = int(np.ceil(dev.samples_per_cp)) + 1
    for frac in np.unique(fracs):
        sel = np.flatnonzero(fracs == frac)
        t = (np.arange(width) - frac) / dev.sample_rate
        base = base_waveform(dev.cp_duration, t)
        # the POI bumps underflow to exact zeros past the first round; skip those columns
        prof = poi_profiles(dev, t)
        nz = np.flatnonzero(prof.any(axis=0))
        c0, c1 = (nz[0], nz[-1] + 1) if nz.size else (0, 0)
        bumps = HW_LEAK_SCALE * leakage_hw(dev, plaintexts[sel]) @ prof[:, c0:c1]
        for row, i in enumerate(sel):
            b = base_idx[i]
            stop = min(length, b + width)
            out[b:stop] += base[:stop - b]
            hi = min(stop, b + c1)
            out[b + c0:hi] += bumps[row, :max(0, hi - b - c0)]
    return out


def band_noise(rng, length, power, lo, hi, sample_rate):
    """Complex Gaussian noise of total ``power`` confined to baseband ``[lo, hi]`` Hz."""
    z = (rng.standard_normal(length) + 1j * rng.standard_normal(length)) / np.sqrt(2)
    if lo > -sample_rate / 2 or hi < sample_rate / 2:
        spec = np.fft.fft(z)
        f = np.fft.fftfreq(length, 1.0 / sample_rate)
        spec[(f < lo) | (f > hi)] = 0.0
        z = np.fft.ifft(spec)
    p = np.mean(np.abs(z) ** 2)
    return z * np.sqrt(power / p) if p > 0 else z


def interference(dev, interferers, f_test, length, rng):
    """Sum of every interferer whose band contains ``f_test``, in baseband."""
    total = np.zeros(length, dtype=np.complex128)
    ref = None
    fs = dev.sample_rate
    for src in interferers:
        if not src.covers(f_test) or src.power == 0:
            continue
        if ref is None:
            ref = peak_leak_power(dev)
        lo = max(src.center - src.bandwidth / 2, f_test - fs / 2) - f_test
        hi = min(src.center + src.bandwidth / 2, f_test + fs / 2) - f_test
        p = src.power * ref * (hi - lo) / src.bandwidth
        total += band_noise(rng, length, p, lo, hi, fs)
    return total


def synth_raw_capture(dev, noise, interferers, f_test, plaintexts, cps_enabled=True,
                      seed=0, lead_in=0.0, tail=0.0, rng=None, dtype=np.complex128):
    """Raw complex-baseband capture of consecutive encryptions at ``f_test``.

    Parameters
    ----------
    dev : DeviceModel
    noise : NoiseModel
    interferers : sequence of InterferenceSource
    f_test : float
        Tested (demodulation) frequency in Hz.
    plaintexts : array_like, shape (n_cps, 16)
        One block per encryption; their count fixes the capture length even when
        ``cps_enabled`` is false.
    cps_enabled : bool
        When false the victim stays idle: only baseline, interference and noise.
    seed : int
        Seed for the noise streams (ignored when ``rng`` is given).
    lead_in, tail : float
        Idle time (s) before the first and after the last encryption.
    dtype : numpy dtype
        ``complex128`` (default) or ``complex64``; the latter halves memory and
        draws single-precision noise, so its samples differ from the default.
    """
    P = check_plaintexts(plaintexts) if len(plaintexts) else np.zeros((0, 16), np.uint8)
    if cps_enabled and P.shape[0] == 0:
        raise ValueError("plaintexts must be non-empty when cps_enabled")
    rng = rng if rng is not None else make_rng(seed, int(round(f_test)))
    length = capture_length(dev, P.shape[0], lead_in, tail)
    dtype = np.dtype(dtype)
    if dtype not in (np.complex64, np.complex128):
        raise ValueError(f"dtype must be complex64 or complex128, got {dtype}")
    real = np.float32 if dtype == np.complex64 else np.float64
    iq = np.full(length, dev.carrier_leak, dtype=dtype)
    if cps_enabled:
        iq.real += (spectral_envelope(dev, f_test) * _leakage_stream(dev, P, length, lead_in)).astype(real)
    if any(s.covers(f_test) and s.power > 0 for s in interferers):
        iq += interference(dev, interferers, f_test, length, rng).astype(dtype)
    sigma = noise.sigma
    if sigma > 0:
        z = rng.standard_normal((2, length), dtype=real)
        z *= real(sigma / np.sqrt(2))
        iq.real += z[0]
        iq.imag += z[1]
    return IqTrace(iq, dev.sample_rate)


def synth_aligned_traces(dev, noise, interferers, f_test, plaintexts, rng, window=None,
                         cps_enabled=True):
    """Magnitude of one capture per encryption, cut at the true start (ideal trigger).

    Equivalent to perfect segmentation of :func:`synth_raw_capture`. ``window`` is an
    optional ``(start, stop)`` sample range kept from each encryption.
    """
    P = check_plaintexts(plaintexts)
    start, stop = window if window is not None else (0, dev.cp_samples)
    t = np.arange(start, stop) / dev.sample_rate
    n, length = P.shape[0], stop - start
    iq = np.zeros((n, length), dtype=np.complex64)
    if cps_enabled:
        iq += (spectral_envelope(dev, f_test) * leakage_waveforms(dev, P, t)).astype(np.float32)
    if dev.carrier_leak:
        iq += np.float32(dev.carrier_leak)
    active = [s for s in interferers if s.covers(f_test) and s.power > 0]
    if active:
        iq += interference(dev, active, f_test, n * length, rng).reshape(n, length).astype(np.complex64)
    sigma = noise.sigma
    if sigma > 0:
        z = rng.standard_normal((2, n, length), dtype=np.float32)
        z *= np.float32(sigma / np.sqrt(2))
        iq.real += z[0]
        iq.imag += z[1]
    return np.abs(iq)


__all__ = [
    "DeviceModel", "InterferenceSource", "NoiseModel", "spectral_envelope", "aes_intermediate",
    "hamming_weight", "synth_cp_leakage", "synth_raw_capture", "synth_aligned_traces",
    "make_rng", "peak_leak_power",
]
