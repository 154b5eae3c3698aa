"""Input checks shared by the estimators."""

from __future__ import annotations

import numpy as np

from .modem import Reception


def check_receptions(X) -> list:
    if isinstance(X, Reception):
        X = [X]
    X = list(X)
    if not X:
        raise ValueError("expected at least one reception")
    for i, r in enumerate(X):
        if not isinstance(r, Reception):
            raise TypeError(f"item {i} is {type(r).__name__}, expected Reception")
        if len(r) == 0:
            raise ValueError(f"reception {i} has no symbols")
    return X


def check_labels(X, y) -> list:
    """Bit labels aligned with ``X``: one int array per reception, same length."""
    if y is None:
        raise ValueError("labels are required for fitting")
    if isinstance(y, np.ndarray) and y.ndim == 1 and len(X) == 1:
        y = [y]
    y = [np.asarray(b, dtype=int) for b in y]
    if len(y) != len(X):
        raise ValueError(f"{len(X)} receptions but {len(y)} label sequences")
    for i, (r, b) in enumerate(zip(X, y)):
        if b.shape != (len(r),):
            raise ValueError(f"sequence {i}: {len(r)} symbols but labels of shape {b.shape}")
        if not np.isin(b, (0, 1)).all():
            raise ValueError(f"sequence {i}: labels must be bits")
    return y


def check_min_samples(X, n_bins: int):
    shortest = min(len(w) for r in X for w in r.windows)
    if shortest < n_bins:
        raise ValueError(f"symbol windows of {shortest} samples cannot fill {n_bins} bins")


def hard_decisions(pmfs) -> np.ndarray:
    """Argmax per row; ties go to the lowest symbol index (bit 0)."""
    return np.argmax(np.asarray(pmfs), axis=-1).astype(np.int8)
