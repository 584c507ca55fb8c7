"""Simulated trace collection: raw captures, segmentation, grouping and averaging.

The collector stands in for the radio front end plus the victim's serial
protocol: it asks the simulated device for runs of encryptions and returns what
an attacker would end up with after segmentation and time-diversity averaging.
"""

import logging
from dataclasses import replace
from functools import cached_property

import numpy as np

from . import dsp
from .exceptions import CollectionError, NoMatches
from .scenario import Scenario
from .segmentation import (SEGMENT_CUTOFF, CpLength, estimate_cp_length, extract_pattern,
                           segment_by_pattern, vt_segment)
from .simulator import (envelope_peak, make_rng, spectral_envelope,
                        synth_aligned_traces, synth_raw_capture)
from .store import TraceSet

log = logging.getLogger(__name__)

# RNG stream tags, one per purpose, so every draw is reproducible in isolation
_PLAINTEXT, _CAPTURE, _PATTERN, _SCAN, _FIXED, _CALIBRATE, _ALIGNED = range(1, 8)
_ROLE_TAG = {"profiling": 1, "attack": 2, "ttest_setA": 3, "ttest_setB": 4}
LEAD_FRACTION = 0.25
CALIBRATION_CPS = 200


def _ftag(f):
    return int(round(f))


class SimulatedCollector:
    """Trace source for sweeps and attacks backed by the simulator.

    Parameters
    ----------
    scenario : Scenario
    seed : int, optional
        Overrides ``scenario.seed``.
    cps_enabled : bool
        False reproduces the idle-victim control: no encryptions are leaked.
    segmentation : {"pattern", "aligned"}, optional
        Overrides ``scenario.collection.segmentation``.
    cp_length : float, optional
        Known encryption period in samples; estimated from a calibration
        capture at the strongest harmonic when omitted.
    """

    def __init__(self, scenario=None, seed=None, cps_enabled=True, segmentation=None,
                 cp_length=None):
        self.scenario = scenario if scenario is not None else Scenario()
        self.seed = self.scenario.seed if seed is None else int(seed)
        self.cps_enabled = cps_enabled
        self.segmentation = segmentation or self.scenario.collection.segmentation
        if self.segmentation not in ("pattern", "aligned"):
            raise ValueError(f"unknown segmentation mode {self.segmentation!r}")
        self._cp_length = None if cp_length is None else CpLength(float(cp_length))

    # -- configuration ---------------------------------------------------------------
    @property
    def device(self):
        return self.scenario.device

    @property
    def plan(self):
        return self.scenario.collection

    @property
    def time_diversity_n(self):
        return self.scenario.time_diversity_n

    @property
    def window(self):
        if self.plan.window == "first_round":
            return self.device.first_round_window()
        return 0, self.device.cp_samples

    @property
    def cp_length(self):
        if self._cp_length is None:
            if not self.plan.estimate_cp_length:
                self._cp_length = CpLength(self.device.period_samples)
            else:
                self._cp_length = self._calibrate_cp_length()
        return self._cp_length

    def _calibrate_cp_length(self):
        # the attacker calibrates once on an active victim at the loudest harmonic
        dev = self.device
        harmonics = [dev.harmonic_frequency(n) for n, a in dev.harmonic_amps.items() if a > 0]
        if not harmonics:
            return CpLength(dev.period_samples)
        f = max(harmonics, key=lambda h: spectral_envelope(dev, h))
        rng = make_rng(self.seed, _CALIBRATE)
        P = rng.integers(0, 256, (CALIBRATION_CPS, 16), dtype=np.uint8)
        raw = dsp.magnitude(synth_raw_capture(dev, self.scenario.noise, self.scenario.interferers,
                                              f, P, rng=rng, dtype=np.complex64))
        return estimate_cp_length(raw, dev.samples_per_cp)

    def describe(self):
        d = {"seed": self.seed, "cps_enabled": self.cps_enabled,
             "segmentation": self.segmentation, "time_diversity_n": self.time_diversity_n,
             "noise_mode": self.scenario.noise.mode}
        if self.segmentation == "pattern" or self._cp_length is not None:
            d["cp_length"] = self.cp_length.samples_per_cp
        a, b = self.fixed_inputs
        d["fixed_A"] = {"plaintext": bytes(a[0]).hex(), "key": bytes(a[1]).hex()}
        d["fixed_B"] = {"plaintext": bytes(b[0]).hex(), "key": bytes(b[1]).hex()}
        return d

    @cached_property
    def fixed_inputs(self):
        """The two (plaintext, key) pairs of the fixed-vs-fixed t-test, drawn once per seed."""
        rng = make_rng(self.seed, _FIXED)
        v = rng.integers(0, 256, (4, 16), dtype=np.uint8)
        return (v[0], v[1]), (v[2], v[3])

    def plaintexts(self, f, n, role, block=0):
        rng = make_rng(self.seed, _PLAINTEXT, _ftag(f), _ROLE_TAG.get(role, 0), block)
        return rng.integers(0, 256, (n, 16), dtype=np.uint8)

    # -- raw captures ----------------------------------------------------------------
    def _raw(self, dev, f, P, rng, lead=0.0):
        iq = synth_raw_capture(dev, self.scenario.noise, self.scenario.interferers, f, P,
                               cps_enabled=self.cps_enabled, rng=rng, lead_in=lead, tail=lead,
                               dtype=np.complex64)
        return dsp.magnitude(iq)

    def scan_capture(self, f, n_cps):
        """Raw amplitude capture of ``n_cps`` back-to-back random encryptions."""
        rng = make_rng(self.seed, _SCAN, _ftag(f))
        P = rng.integers(0, 256, (n_cps, 16), dtype=np.uint8)
        return self._raw(self.device, f, P, rng)

    def pattern(self, f):
        """Virtual-Triggering pattern at ``f`` (re-extracted for every frequency)."""
        rng = make_rng(self.seed, _PATTERN, _ftag(f))
        n = self.plan.n_segs
        P = rng.integers(0, 256, (n, 16), dtype=np.uint8)
        raw = self._raw(self.device, f, P, rng)
        return extract_pattern(vt_segment(raw, self.cp_length, n), f, raw.sample_rate)

    # -- segmented, averaged traces --------------------------------------------------
    def collect(self, f, plaintexts, role, key=None):
        """Averaged traces for ``plaintexts`` (one row per trace) at frequency ``f``.

        Returns ``(traces, kept)`` where ``kept`` indexes the rows of
        ``plaintexts`` that survived segmentation.
        """
        P = np.asarray(plaintexts, dtype=np.uint8).reshape(-1, 16)
        dev = self.device if key is None else replace(self.device, key=bytes(key))
        if self.segmentation == "aligned":
            return self._collect_aligned(dev, f, P, role), np.arange(P.shape[0])
        return self._collect_pattern(dev, f, P, role)

    def _collect_aligned(self, dev, f, P, role):
        n_div = self.time_diversity_n
        start, stop = self.window
        # the low-pass needs context on both sides of the kept window
        margin = dsp.DEFAULT_NUM_TAPS
        lo, hi = max(0, start - margin), min(dev.cp_samples, stop + margin)
        out = np.empty((P.shape[0], stop - start))
        per_block = max(1, 4000 // n_div)
        for blk, i in enumerate(range(0, P.shape[0], per_block)):
            rng = make_rng(self.seed, _ALIGNED, _ftag(f), _ROLE_TAG.get(role, 0), blk)
            Pb = P[i:i + per_block]
            mags = synth_aligned_traces(dev, self.scenario.noise, self.scenario.interferers, f,
                                        np.repeat(Pb, n_div, axis=0), rng, window=(lo, hi),
                                        cps_enabled=self.cps_enabled)
            avg = mags.reshape(Pb.shape[0], n_div, -1).mean(axis=1, dtype=np.float64)
            filt = dsp.lowpass_rows(avg, SEGMENT_CUTOFF, dev.sample_rate)
            out[i:i + Pb.shape[0]] = filt[:, start - lo:stop - lo]
        return out

    def _collect_pattern(self, dev, f, P, role):
        n_div = self.time_diversity_n
        L = self.cp_length.samples_per_cp
        pattern = self.pattern(f)
        start, stop = self.window
        lead = LEAD_FRACTION * dev.cp_duration
        lead_samples = lead * dev.sample_rate
        groups = max(1, self.plan.chunk_cps // n_div)
        rows, kept = [], []
        for blk, i in enumerate(range(0, P.shape[0], groups)):
            Pb = P[i:i + groups]
            rng = make_rng(self.seed, _CAPTURE, _ftag(f), _ROLE_TAG.get(role, 0), blk)
            raw = self._raw(dev, f, np.repeat(Pb, n_div, axis=0), rng, lead)
            try:
                segs, pos = segment_by_pattern(raw, pattern, self.plan.peak_threshold,
                                               segment_cutoff=None, return_positions=True)
            except NoMatches:
                if blk == 0:
                    # nothing at all in the first capture: give up on this frequency
                    raise CollectionError(f"no encryption found at {f:.0f} Hz") from None
                continue
            slot = np.rint((pos - lead_samples) / L).astype(np.int64)
            n_slots = Pb.shape[0] * n_div
            ok = (slot >= 0) & (slot < n_slots)
            by_slot = np.full(n_slots, -1)
            by_slot[slot[ok][::-1]] = np.flatnonzero(ok)[::-1]  # first match wins
            grid = by_slot.reshape(Pb.shape[0], n_div)
            complete = np.all(grid >= 0, axis=1)
            if not np.any(complete):
                continue
            rows.append(segs[grid[complete]].mean(axis=1))
            kept.append(i + np.flatnonzero(complete))
        if not rows:
            raise CollectionError(f"segmentation produced no complete group at {f:.0f} Hz")
        # filtering commutes with averaging, so filter the (fewer) averaged rows
        avg = dsp.lowpass_rows(np.concatenate(rows), SEGMENT_CUTOFF, dev.sample_rate)
        return avg[:, start:min(stop, avg.shape[1])], np.concatenate(kept)

    def trace_set(self, f, n, role="profiling", block=0, with_key=None):
        """A :class:`TraceSet` of ``n`` requested traces with fresh random plaintexts.

        The key is attached for profiling sets (or when ``with_key`` is true).
        Groups lost to segmentation are dropped, so ``n_traces`` may be below ``n``.
        """
        P = self.plaintexts(f, n, role, block)
        X, kept = self.collect(f, P, role)
        if X.shape[0] == 0:
            raise CollectionError(f"no traces survived at {f:.0f} Hz")
        attach = role == "profiling" if with_key is None else with_key
        return TraceSet.from_arrays(X, P[kept], center_frequency=f,
                                    sample_rate=self.device.sample_rate,
                                    time_diversity_n=self.time_diversity_n,
                                    key=self.device.key if attach else None, role=role)

    def fixed_vs_fixed(self, f, n):
        """Two trace matrices of ``n`` requested traces each, one per fixed (plaintext, key)."""
        (pa, ka), (pb, kb) = self.fixed_inputs
        a, _ = self.collect(f, np.tile(pa, (n, 1)), "ttest_setA", key=ka)
        b, _ = self.collect(f, np.tile(pb, (n, 1)), "ttest_setB", key=kb)
        if a.shape[0] < 2 or b.shape[0] < 2:
            raise CollectionError(f"fewer than 2 traces per class at {f:.0f} Hz")
        return a, b


def leaky_frequencies(dev, freqs, fraction=0.1):
    """Grid points where the spectral envelope reaches ``fraction`` of its peak."""
    freqs = np.asarray(freqs, dtype=np.float64)
    return freqs[spectral_envelope(dev, freqs) >= fraction * envelope_peak(dev)]


