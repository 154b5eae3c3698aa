"""Receiver front end: sync detection, symbol slicing, binning and features."""

from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import uniform_filter1d

from .channel import WaveformTrace
from .framing import FrameSpec


class SyncError(RuntimeError):
    """No sync pulse onset could be located in the trace."""


SMOOTH_S = 0.050
NOISE_PROBE_S = 0.200
THRESHOLD_SIGMAS = 4.0
# floor on the slope threshold (pH/s) so a noiseless trace does not trigger on round-off
MIN_SLOPE_THRESHOLD = 0.5
EDGE_FRACTIONS = (0.05, 0.5)
TROUGH_SEARCH_S = 1.0


def _smooth_width(fs: float) -> int:
    return max(1, int(round(SMOOTH_S * fs)))


def _smoothed_slope(samples: np.ndarray, fs: float):
    smooth = uniform_filter1d(samples, size=_smooth_width(fs), mode="nearest")
    return smooth, np.gradient(smooth) * fs


def _slope_noise_gain(fs: float) -> float:
    """Std of the smoothed slope per unit std of white sample noise."""
    w = _smooth_width(fs)
    impulse = np.zeros(4 * w + 5)
    impulse[impulse.size // 2] = 1.0
    _, response = _smoothed_slope(impulse, fs)
    return float(np.sqrt(np.sum(response**2)))


def detect_sync(trace: WaveformTrace, spec: FrameSpec | None = None) -> float:
    """Estimate the arrival time (s) of the sync acid pulse at the receiver.

    The 50 ms moving-average slope is compared against four times its noise
    level, estimated from the first 200 ms.  The first downward crossing that
    persists for half the smoothing span locates the falling edge.  A straight
    line is then fitted to the raw samples on the upper half of the edge, and
    the onset is where that line meets the pre-pulse level.
    """
    fs = trace.sample_rate
    x = trace.samples
    n_probe = max(3, int(round(NOISE_PROBE_S * fs)))
    if x.size < 2 * n_probe:
        raise SyncError("trace too short for sync detection")
    smooth, slope = _smoothed_slope(x, fs)
    step = np.diff(x[:n_probe])
    sigma = 1.4826 * np.median(np.abs(step - np.median(step))) / np.sqrt(2.0)
    theta = max(THRESHOLD_SIGMAS * sigma * _slope_noise_gain(fs), MIN_SLOPE_THRESHOLD)
    min_run = max(1, _smooth_width(fs) // 2)
    below = slope < -theta
    i0 = None
    run = 0
    for i, flag in enumerate(below):
        run = run + 1 if flag else 0
        if run >= min_run:
            i0 = i - run + 1
            break
    if i0 is None:
        raise SyncError("no falling edge found; is the sync preamble present?")
    i1 = i0
    while i1 + 1 < slope.size and below[i1 + 1]:
        i1 += 1
    i_steep = i0 + int(np.argmin(slope[i0:i1 + 1]))
    base_end = max(2, min(n_probe, i0 - _smooth_width(fs)))
    level = float(np.median(smooth[:base_end]))
    # least-squares line through the raw samples on the upper part of the edge,
    # chosen by level (between EDGE_FRACTIONS of the pulse depth) so that noise
    # in the slope does not move the fitted region
    span = int(round(TROUGH_SEARCH_S * fs))
    depth = level - float(np.min(smooth[i0:i0 + span]))
    hi, lo = (level - f * depth for f in EDGE_FRACTIONS)
    start = max(0, i0 - _smooth_width(fs))
    a = start + int(np.argmax(smooth[start:] <= hi))
    b = a + int(np.argmax(smooth[a:] <= lo))
    if b - a < 2:
        t_steep = trace.t0 + i_steep / fs
        return float(t_steep - (level - smooth[i_steep]) / (-slope[i_steep]))
    t = trace.t0 + np.arange(a, b + 1) / fs
    gain, offset = np.polyfit(t, x[a:b + 1], 1)
    if gain >= 0:
        raise SyncError("sync edge is not falling")
    return float((level - offset) / gain)


def symbol_bounds(trace: WaveformTrace, start: float, spec: FrameSpec, k: int) -> np.ndarray:
    """Sample index boundaries of ``k`` symbol windows; window i is [b[i], b[i+1])."""
    first = start + spec.preamble_s
    edges = first + np.arange(k + 1) * spec.symbol_s
    return np.ceil((edges - trace.t0) * trace.sample_rate - 1e-9).astype(int)


def slice_symbols(trace: WaveformTrace, start: float, spec: FrameSpec, k: int) -> list:
    """Cut the trace into ``k`` consecutive symbol windows after the preamble.

    ``start`` is the detected sync onset; window i covers
    [start + preamble + i*T, start + preamble + (i+1)*T).
    """
    if k < 1:
        raise ValueError("need at least one symbol")
    bounds = symbol_bounds(trace, start, spec, k)
    if bounds[0] < 0:
        raise ValueError("first symbol window starts before the trace")
    if bounds[-1] > len(trace):
        missing = (bounds[-1] - len(trace)) / trace.sample_rate
        raise ValueError(f"trace too short for {k} symbols: {missing:.3f} s missing")
    return [trace.samples[a:b] for a, b in zip(bounds[:-1], bounds[1:])]


def bin_sizes(n: int, n_bins: int) -> np.ndarray:
    base, extra = divmod(n, n_bins)
    sizes = np.full(n_bins, base, dtype=int)
    sizes[:extra] += 1
    return sizes


def bin_symbol(window, n_bins: int) -> np.ndarray:
    window = np.asarray(window, dtype=np.float64)
    if n_bins < 1:
        raise ValueError("need at least one bin")
    if window.size < n_bins:
        raise ValueError(f"window of {window.size} samples cannot fill {n_bins} bins")
    edges = np.concatenate(([0], np.cumsum(bin_sizes(window.size, n_bins))))
    return np.add.reduceat(window, edges[:-1]) / np.diff(edges)


def extract_features(window, n_bins: int, spec: FrameSpec, normalizer=None) -> np.ndarray:
    """Feature layout ``[b_first, b_last, d_0..d_{B-2}, symbol duration (s)]``."""
    b = bin_symbol(window, n_bins)
    feats = np.concatenate(([b[0], b[-1]], np.diff(b), [spec.symbol_s]))
    if normalizer is not None:
        feats = normalizer.transform(feats[None, :])[0]
    return feats


def receive(trace: WaveformTrace, spec: FrameSpec, k: int):
    """Sync and slice in one go; returns (onset, windows)."""
    onset = detect_sync(trace, spec)
    return onset, slice_symbols(trace, onset, spec, k)


def samples_per_symbol(spec: FrameSpec, sample_rate: float) -> int:
    return int(math.floor(spec.symbol_s * sample_rate))


class Reception:
    """Symbol windows cut from one received transmission, with the frame they came from."""

    def __init__(self, windows, spec: FrameSpec, onset: float | None = None):
        self.windows = [np.asarray(w, dtype=np.float64) for w in windows]
        self.spec = spec
        self.onset = onset

    def __len__(self):
        return len(self.windows)

    def __repr__(self):
        return f"Reception({len(self)} symbols, {self.spec.symbol_ms} ms)"

    def bins(self, n_bins: int) -> np.ndarray:
        return np.stack([bin_symbol(w, n_bins) for w in self.windows])

    def features(self, n_bins: int) -> np.ndarray:
        return np.stack([extract_features(w, n_bins, self.spec) for w in self.windows])

    def head(self, k: int) -> "Reception":
        return Reception(self.windows[:k], self.spec, self.onset)
