"""Sliding bidirectional-RNN inference over a symbol stream.

A fixed-length bidirectional network scores every window of ``L``
consecutive symbols.  The estimate for symbol k averages the PMFs it received
from every window that covers it; after each new symbol the window slides by
one, so recent estimates keep improving while older ones freeze.

Indices are 0-based here: window ``j`` covers symbols ``j .. j+L-1`` and the
valid starts for a stream of ``K >= L`` symbols are ``0 .. K-L``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..validation import hard_decisions


def window_starts(k: int, window: int, n_symbols: int | None = None) -> range:
    """Starts of the windows that cover symbol ``k``.

    With ``n_symbols`` given, only windows that fit inside the stream count;
    a stream shorter than the window is covered by a single start at 0.
    """
    if window < 1:
        raise ValueError("window length must be positive")
    lo = max(0, k - window + 1)
    hi = k
    if n_symbols is not None:
        hi = min(hi, max(n_symbols - window, 0))
    return range(lo, hi + 1)


def window_count(k: int, window: int, n_symbols: int | None = None) -> int:
    return len(window_starts(k, window, n_symbols))


def uniform_weight(position: int, window: int) -> float:
    return 1.0


@dataclass
class StreamUpdate:
    """What one push changed.

    ``first`` is the index of ``pmfs[0]``; ``pmfs`` are the current averaged
    estimates of every symbol inside the newest window (the oldest of which
    has just been finalized).  ``finalized``
    lists ``(index, bit, pmf)`` for symbols whose estimate will not change again.
    """

    first: int = 0
    pmfs: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))
    finalized: list = field(default_factory=list)

    @property
    def provisional_bits(self) -> np.ndarray:
        return hard_decisions(self.pmfs) if len(self.pmfs) else np.empty(0, dtype=np.int8)


class SbrnnState:
    """Per-stream state: the last ``L`` feature vectors and running PMF sums.

    ``window_fn`` maps an (n, F) block of features to (n, m) PMFs.  It is
    called with exactly ``L`` rows while streaming and with fewer only when a
    stream ends before ``L`` symbols arrived.
    """

    def __init__(self, window: int, window_fn=None, m: int = 2, weight=uniform_weight):
        if window < 1:
            raise ValueError("window length must be positive")
        self.window = int(window)
        self.window_fn = window_fn
        self.m = m
        self.weight = weight
        self.buffer = deque(maxlen=self.window)
        self.n_seen = 0
        self.sums = {}
        self.counts = {}
        self.final_pmfs = []
        self.closed = False

    # helpers -------------------------------------------------------------------------
    @property
    def n_final(self) -> int:
        return len(self.final_pmfs)

    def estimate(self, k: int) -> np.ndarray:
        if k < self.n_final:
            return self.final_pmfs[k]
        return self.sums[k] / self.counts[k]

    def _accumulate(self, start: int, pmfs: np.ndarray):
        for pos, p in enumerate(pmfs):
            k = start + pos
            w = self.weight(pos, len(pmfs))
            if k in self.sums:
                self.sums[k] = self.sums[k] + w * p
                self.counts[k] += w
            else:
                self.sums[k] = w * np.asarray(p, dtype=np.float64)
                self.counts[k] = w

    def _finalize_through(self, last: int) -> list:
        done = []
        for k in range(self.n_final, last + 1):
            p = self.sums.pop(k) / self.counts.pop(k)
            self.final_pmfs.append(p)
            done.append((k, int(hard_decisions(p)), p))
        return done

    # public --------------------------------------------------------------------------
    def push(self, features) -> StreamUpdate:
        if self.window_fn is None:
            raise RuntimeError("no model attached to this SBRNN state")
        if self.closed:
            raise RuntimeError("stream already closed")
        self.buffer.append(np.asarray(features, dtype=np.float64))
        self.n_seen += 1
        if self.n_seen < self.window:
            return StreamUpdate(self.n_final, np.empty((0, self.m)))
        start = self.n_seen - self.window
        pmfs = np.asarray(self.window_fn(np.stack(self.buffer)))
        if pmfs.shape[0] != self.window:
            raise ValueError(f"window model returned {pmfs.shape[0]} PMFs for {self.window} symbols")
        self._accumulate(start, pmfs)
        finalized = self._finalize_through(start)
        live = np.array([self.estimate(k) for k in range(start, self.n_seen)])
        return StreamUpdate(start, live, finalized)

    def close(self) -> StreamUpdate:
        """End of stream: every remaining estimate becomes final."""
        if self.closed:
            return StreamUpdate(self.n_final, np.empty((0, self.m)))
        self.closed = True
        if 0 < self.n_seen < self.window:
            if self.window_fn is None:
                raise RuntimeError("no model attached to this SBRNN state")
            self._accumulate(0, np.asarray(self.window_fn(np.stack(self.buffer))))
        update = StreamUpdate(self.n_final, np.empty((0, self.m)))
        update.finalized = self._finalize_through(self.n_seen - 1)
        return update

    def result(self):
        if not self.closed:
            raise RuntimeError("close() the stream before reading the final result")
        pmfs = np.array(self.final_pmfs) if self.final_pmfs else np.empty((0, self.m))
        return hard_decisions(pmfs) if len(pmfs) else np.empty(0, dtype=np.int8), pmfs


def sbrnn_push(state: SbrnnState, features) -> StreamUpdate:
    return state.push(features)


def sbrnn_detect_stream(stream, window_fn, window: int, m: int = 2, on_update=None):
    """Run a whole stream through a fresh :class:`SbrnnState`.

    Returns ``(bits, pmfs)`` with the final averaged PMF per symbol.
    ``on_update`` (optional) receives every :class:`StreamUpdate`.
    """
    state = SbrnnState(window, window_fn, m)
    for feats in stream:
        update = state.push(feats)
        if on_update is not None:
            on_update(update)
    update = state.close()
    if on_update is not None:
        on_update(update)
    return state.result()
