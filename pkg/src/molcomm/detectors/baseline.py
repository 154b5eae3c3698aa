"""Rate-of-change threshold detector: the sign of one bin difference decides the bit."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.utils.validation import check_is_fitted

from ..modem import bin_sizes
from ..validation import check_labels, check_min_samples, check_receptions
from .base import Detector

B_RANGE = (3, 40)


@dataclass(frozen=True)
class BaselineParams:
    n_bins: int
    gamma: int

    def __post_init__(self):
        if self.n_bins < 2:
            raise ValueError("need at least two bins")
        if not 0 <= self.gamma <= self.n_bins - 2:
            raise ValueError(f"gamma={self.gamma} out of range for B={self.n_bins}")


def baseline_detect(d, gamma: int) -> int:
    """0 (acid) if ``d[gamma] <= 0`` else 1 (base)."""
    d = np.asarray(d)
    if not 0 <= gamma < d.shape[-1]:
        raise IndexError(f"gamma={gamma} out of range for {d.shape[-1]} differences")
    return (d[..., gamma] > 0).astype(np.int8) if d.ndim > 1 else int(d[gamma] > 0)


def _binned(windows_by_len, n_bins):
    # bin means for equal-length groups of windows via cumulative sums
    out = []
    for mat in windows_by_len:
        edges = np.concatenate(([0], np.cumsum(bin_sizes(mat.shape[1], n_bins))))
        cs = np.concatenate([np.zeros((mat.shape[0], 1)), np.cumsum(mat, axis=1)], axis=1)
        out.append((cs[:, edges[1:]] - cs[:, edges[:-1]]) / np.diff(edges))
    return np.concatenate(out)


def _group_windows(X, y):
    groups = {}
    for r, bits in zip(X, y):
        for w, b in zip(r.windows, bits):
            groups.setdefault(len(w), ([], []))
            groups[len(w)][0].append(w)
            groups[len(w)][1].append(b)
    mats = [np.stack(v[0]) for v in groups.values()]
    labels = np.concatenate([np.asarray(v[1]) for v in groups.values()])
    return mats, labels


def search_baseline(X, y, b_range=B_RANGE):
    """Exhaustive (B, gamma) search minimising training BER.

    Returns ``(params, ber, n_cells)``; ties prefer smaller B, then smaller gamma.
    """
    mats, labels = _group_windows(X, y)
    shortest = min(m.shape[1] for m in mats)
    best = None
    n_cells = 0
    for n_bins in range(b_range[0], b_range[1] + 1):
        if n_bins > shortest:
            break
        d = np.diff(_binned(mats, n_bins), axis=1)
        errors = ((d > 0).astype(int) != labels[:, None]).sum(axis=0)
        n_cells += d.shape[1]
        g = int(np.argmin(errors))
        if best is None or errors[g] < best[0]:
            best = (int(errors[g]), n_bins, g)
    if best is None:
        raise ValueError("symbol windows too short for any bin count in range")
    return BaselineParams(best[1], best[2]), best[0] / labels.size, n_cells


class BaselineDetector(Detector):
    """Slope-sign detector; ``fit`` tunes B and gamma unless both are given."""

    architecture = "baseline"

    def __init__(self, n_bins=None, gamma=None):
        self.n_bins = n_bins
        self.gamma = gamma

    def fit(self, X, y=None):
        if self.n_bins is not None and self.gamma is not None:
            self.params_ = BaselineParams(int(self.n_bins), int(self.gamma))
            self.train_ber_ = None
            return self
        X = check_receptions(X)
        y = check_labels(X, y)
        b_range = (self.n_bins, self.n_bins) if self.n_bins is not None else B_RANGE
        self.params_, self.train_ber_, self.n_cells_ = search_baseline(X, y, b_range)
        return self

    def _proba_one(self, reception):
        check_is_fitted(self, "params_")
        check_min_samples([reception], self.params_.n_bins)
        d = np.diff(reception.bins(self.params_.n_bins), axis=1)
        bits = baseline_detect(d, self.params_.gamma)
        return np.eye(self.m)[bits]
