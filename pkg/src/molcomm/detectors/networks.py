"""Neural detectors trained end to end on labelled receptions.

Symbol models (Base-Net, CNN-Net) see one symbol at a time.  Sequence models
(LSTM3-Net, CNN-LSTM3-Net) run causally over the whole stream; SBLSTM3-Net
runs a bidirectional network over a sliding window of L symbols.
"""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_is_fitted

from ..nn import BLSTM, LSTM, Conv1D, Dense, Flatten, MaxPool1D, Network, SoftmaxOutput, fit_network
from ..nn.ops import ShapeError, one_hot
from ..validation import check_labels, check_min_samples, check_receptions, hard_decisions
from .base import Detector, Standardizer
from .sbrnn import SbrnnState, sbrnn_detect_stream

HIDDEN = 40
DENSE_UNITS = 80
CNN_FILTERS = 16


class NetworkDetector(Detector):
    """Shared fit/predict plumbing: features -> standardise -> network."""

    def _raw_features(self, reception) -> np.ndarray:
        return reception.features(self.n_bins)

    def _build(self, n_features, rng) -> Network:
        raise NotImplementedError

    def _batches(self, feats, labels, rng):
        raise NotImplementedError

    def features(self, reception) -> np.ndarray:
        """Standardised network input for one reception, shape (K, F) or (K, B, 1)."""
        return self.normalizer_.transform(self._raw_features(reception))

    def fit(self, X, y):
        X = check_receptions(X)
        y = check_labels(X, y)
        check_min_samples(X, self.n_bins)
        raw = [self._raw_features(r) for r in X]
        self.normalizer_ = Standardizer().fit(np.concatenate(raw))
        feats = [self.normalizer_.transform(f) for f in raw]
        rng = np.random.default_rng(self.random_state)
        self.network_ = self._build(feats[0].shape[1:], rng)
        self.loss_curve_ = fit_network(
            self.network_, lambda g: self._batches(feats, y, g), self.epochs, self.learning_rate, rng
        )
        return self

    def _check_fitted(self):
        check_is_fitted(self, "network_")


class SymbolDetector(NetworkDetector):
    def _batches(self, feats, labels, rng):
        x = np.concatenate(feats)
        t = one_hot(np.concatenate(labels), self.m)
        order = rng.permutation(len(x))
        bs = self.batch_size
        return [(x[order[i:i + bs]], t[order[i:i + bs]], None) for i in range(0, len(x), bs)]

    def _proba_one(self, reception):
        self._check_fitted()
        return self.network_.forward(self.features(reception))


class BaseNetDetector(SymbolDetector):
    """Three 80-unit ReLU layers over the bin-difference summary of one symbol."""

    architecture = "base-net"

    def __init__(self, n_bins=9, learning_rate=1e-3, epochs=200, batch_size=10,
                 random_state=None, init="glorot"):
        self.n_bins = n_bins
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.random_state = random_state
        self.init = init

    def _build(self, shape, rng):
        (n_in,) = shape
        kw = {"rng": rng, "init": self.init}
        return Network([
            Dense(n_in, DENSE_UNITS, "relu", **kw),
            Dense(DENSE_UNITS, DENSE_UNITS, "relu", **kw),
            Dense(DENSE_UNITS, DENSE_UNITS, "relu", **kw),
            SoftmaxOutput(DENSE_UNITS, self.m, **kw),
        ])


def cnn_layers(n_bins, rng=None, init="glorot", m=2):
    kw = {"rng": rng, "init": init}
    pooled = n_bins // 2 // 2
    if pooled < 1:
        raise ValueError(f"CNN needs at least 4 bins, got {n_bins}")
    return [
        Conv1D(1, CNN_FILTERS, 2, **kw),
        Conv1D(CNN_FILTERS, CNN_FILTERS, 4, **kw),
        MaxPool1D(2),
        Conv1D(CNN_FILTERS, CNN_FILTERS, 6, **kw),
        Conv1D(CNN_FILTERS, CNN_FILTERS, 8, **kw),
        MaxPool1D(2),
        Flatten(),
        SoftmaxOutput(CNN_FILTERS * pooled, m, **kw),
    ]


class CNNNetDetector(SymbolDetector):
    """Four 1-D convolutions with two max-pools over the B raw bin means of one symbol."""

    architecture = "cnn-net"

    def __init__(self, n_bins=30, learning_rate=1e-3, epochs=200, batch_size=10,
                 random_state=None, init="glorot"):
        self.n_bins = n_bins
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.random_state = random_state
        self.init = init

    def _raw_features(self, reception):
        return reception.bins(self.n_bins)[..., None]

    def _build(self, shape, rng):
        return Network(cnn_layers(self.n_bins, rng, self.init, self.m))

    def feature_map(self, reception) -> np.ndarray:
        """Flattened output of the last pooling stage, (K, 16 * floor(B/4))."""
        self._check_fitted()
        out = self.features(reception)
        for layer in self.network_.layers[:-1]:
            out = layer.forward(out)
        self.network_.clear()
        return out


class SequenceDetector(NetworkDetector):
    """Causal stacked LSTM emitting one PMF per symbol."""

    def _build(self, shape, rng):
        (n_in,) = shape
        kw = {"rng": rng, "init": self.init}
        return Network([
            LSTM(n_in, HIDDEN, **kw),
            LSTM(HIDDEN, HIDDEN, **kw),
            LSTM(HIDDEN, HIDDEN, **kw),
            SoftmaxOutput(HIDDEN, self.m, **kw),
        ])

    def _batches(self, feats, labels, rng):
        # batch_size whole sequences per step; unequal lengths are padded and masked
        order = rng.permutation(len(feats))
        out = []
        for i in range(0, len(order), self.batch_size):
            idx = order[i:i + self.batch_size]
            out.append(_pad_batch([feats[j] for j in idx], [labels[j] for j in idx], self.m))
        return out

    def _proba_one(self, reception):
        self._check_fitted()
        return self.network_.forward(self.features(reception)[None])[0]

    def predict_sequence(self, reception):
        """Symbol-by-symbol streaming: each decision only sees symbols up to itself."""
        self._check_fitted()
        state = self.network_.initial_state()
        pmfs = []
        for x_t in self.features(reception):
            p, state = self.network_.step(x_t, state)
            pmfs.append(p)
        pmfs = np.array(pmfs)
        return hard_decisions(pmfs), pmfs


def _pad_batch(feats, labels, m):
    n = max(len(f) for f in feats)
    x = np.zeros((len(feats), n) + feats[0].shape[1:])
    t = np.zeros((len(feats), n, m))
    mask = np.zeros((len(feats), n))
    for i, (f, b) in enumerate(zip(feats, labels)):
        x[i, :len(f)] = f
        t[i, :len(f)] = one_hot(b, m)
        mask[i, :len(f)] = 1
    return x, t, (None if mask.all() else mask)


class LSTM3Detector(SequenceDetector):
    """Three 40-unit LSTM layers over per-symbol bin-difference features."""

    architecture = "lstm3-net"

    def __init__(self, n_bins=8, learning_rate=1e-3, epochs=200, batch_size=10,
                 random_state=None, init="glorot"):
        self.n_bins = n_bins
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.random_state = random_state
        self.init = init


class CNNLSTM3Detector(SequenceDetector):
    """LSTM3 stack fed by the feature map of a CNN-Net trained first and then frozen.

    ``cnn`` may be a fitted :class:`CNNNetDetector`; otherwise one is trained
    on the same data with the same hyperparameters.
    """

    architecture = "cnn-lstm3-net"

    def __init__(self, n_bins=30, learning_rate=1e-3, epochs=200, batch_size=10,
                 random_state=None, init="glorot", cnn=None):
        self.n_bins = n_bins
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.random_state = random_state
        self.init = init
        self.cnn = cnn

    def fit(self, X, y):
        X = check_receptions(X)
        if self.cnn is not None and hasattr(self.cnn, "network_"):
            if self.cnn.n_bins != self.n_bins:
                raise ValueError(f"CNN uses B={self.cnn.n_bins}, detector B={self.n_bins}")
            self.cnn_ = self.cnn
        else:
            self.cnn_ = CNNNetDetector(
                self.n_bins, self.learning_rate, self.epochs, batch_size=self.batch_size,
                random_state=self.random_state, init=self.init,
            ).fit(X, y)
        return super().fit(X, y)

    def _raw_features(self, reception):
        return self.cnn_.feature_map(reception)


class SBLSTM3Detector(NetworkDetector):
    """Three bidirectional 40-unit LSTM layers applied over a sliding window of L symbols.

    Training draws length-L windows from each sequence.  With
    ``window_sampling="tile"`` each epoch tiles a sequence with non-overlapping
    windows at a random phase, so every offset is visited across epochs at a
    fraction of the cost; ``"all"`` uses every offset in every epoch.
    """

    architecture = "sblstm3-net"

    def __init__(self, n_bins=8, window=10, learning_rate=1e-3, epochs=200, batch_size=10,
                 random_state=None, init="glorot", window_sampling="tile"):
        self.n_bins = n_bins
        self.window = window
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.random_state = random_state
        self.init = init
        self.window_sampling = window_sampling

    def fit(self, X, y):
        if int(self.window) < 1:
            raise ValueError(f"window length must be >= 1, got {self.window}")
        if self.window_sampling not in ("tile", "all"):
            raise ValueError(f"window_sampling must be 'tile' or 'all', got {self.window_sampling!r}")
        return super().fit(X, y)

    def _build(self, shape, rng):
        (n_in,) = shape
        kw = {"rng": rng, "init": self.init}
        return Network([
            BLSTM(n_in, HIDDEN, **kw),
            BLSTM(2 * HIDDEN, HIDDEN, **kw),
            BLSTM(2 * HIDDEN, HIDDEN, **kw),
            SoftmaxOutput(2 * HIDDEN, self.m, **kw),
        ])

    def _windows(self, f, b, rng):
        L, K = self.window, len(f)
        if K <= L:
            return [(f, b)]
        if self.window_sampling == "all":
            starts = range(K - L + 1)
        else:
            starts = range(int(rng.integers(L)), K - L + 1, L)
            if not len(starts):
                starts = [int(rng.integers(K - L + 1))]
        return [(f[s:s + L], b[s:s + L]) for s in starts]

    def _batches(self, feats, labels, rng):
        # windows from batch_size sequences form one step; short sequences batch by length
        order = rng.permutation(len(feats))
        out = []
        for i in range(0, len(order), self.batch_size):
            groups = {}
            for j in order[i:i + self.batch_size]:
                for wf, wb in self._windows(feats[j], labels[j], rng):
                    groups.setdefault(len(wf), []).append((wf, wb))
            for items in groups.values():
                x = np.stack([w for w, _ in items])
                t = one_hot(np.stack([b for _, b in items]), self.m)
                out.append((x, t, None))
        return out

    def _block_forward(self, feats):
        out = self.network_.forward(np.asarray(feats)[None])[0]
        self.network_.clear()
        return out

    def window_forward(self, window_features) -> np.ndarray:
        """PMFs (L, m) for exactly L consecutive standardised feature vectors."""
        self._check_fitted()
        window_features = np.asarray(window_features, dtype=np.float64)
        if window_features.ndim != 2 or len(window_features) != self.window:
            raise ShapeError(f"window must hold {self.window} symbols, got shape {window_features.shape}")
        return self._block_forward(window_features)

    def stream(self) -> SbrnnState:
        """Fresh sliding-window state for feeding standardised features one symbol at a time."""
        self._check_fitted()
        return SbrnnState(self.window, self._block_forward, m=self.m)

    def _proba_one(self, reception):
        self._check_fitted()
        _, pmfs = sbrnn_detect_stream(self.features(reception), self._block_forward, self.window, self.m)
        return pmfs

    def predict_sequence(self, reception):
        pmfs = self._proba_one(reception)
        return hard_decisions(pmfs), pmfs


DETECTORS = {
    cls.architecture: cls
    for cls in (BaseNetDetector, CNNNetDetector, LSTM3Detector, CNNLSTM3Detector, SBLSTM3Detector)
}
