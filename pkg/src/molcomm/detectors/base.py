from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from ..validation import check_labels, check_receptions, hard_decisions


class Standardizer:
    """Per-feature z-score with statistics frozen at fit time."""

    def __init__(self, mean=None, scale=None):
        self.mean = None if mean is None else np.asarray(mean, dtype=np.float64)
        self.scale = None if scale is None else np.asarray(scale, dtype=np.float64)

    def fit(self, x):
        x = np.asarray(x, dtype=np.float64).reshape(-1, np.shape(x)[-1])
        self.mean = x.mean(axis=0)
        sd = x.std(axis=0)
        self.scale = np.where(sd > 1e-12, sd, 1.0)
        return self

    def transform(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.scale


class Detector(BaseEstimator):
    """Common surface of every detector.

    ``X`` is a list of :class:`~molcomm.modem.Reception` objects and ``y`` a
    list of bit arrays of matching lengths.  ``predict_proba`` returns one
    (K, 2) PMF array per reception; ``predict`` the argmax bits (ties -> 0).
    ``predict_sequence`` runs the detector the way it is deployed, symbol by
    symbol over a stream, and is what BER evaluation uses.
    """

    architecture = None
    m = 2

    def fit(self, X, y):
        raise NotImplementedError

    def _proba_one(self, reception):
        raise NotImplementedError

    def predict_proba(self, X):
        return [self._proba_one(r) for r in check_receptions(X)]

    def predict(self, X):
        return [hard_decisions(p) for p in self.predict_proba(X)]

    def predict_sequence(self, reception):
        pmfs = self._proba_one(reception)
        return hard_decisions(pmfs), pmfs

    def score(self, X, y):
        X = check_receptions(X)
        y = check_labels(X, y)
        pred = self.predict(X)
        errors = sum(int(np.sum(p != t)) for p, t in zip(pred, y))
        return 1.0 - errors / sum(len(t) for t in y)
