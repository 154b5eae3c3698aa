"""Layer objects wrapping the kernels in :mod:`molcomm.nn.ops`.

Every layer keeps its parameters in ``params`` (name -> array) and, after
``backward``, the matching gradients in ``grads``.  Parameter shapes per kind:

============  ==================================================
dense         W (in, out), b (out,)
softmax       W (in, m), b (m,); a dense layer feeding the softmax
conv1d        W (kernel, in_channels, filters), b (filters,)
lstm          W_x (in, 4H), W_h (H, 4H), b (4H,)
blstm         fwd_/bwd_ prefixed copies of the lstm parameters
maxpool1d     none
flatten       none
============  ==================================================
"""

from __future__ import annotations

import numpy as np

from . import ops


class NotForwardedError(RuntimeError):
    """backward() called without a cached forward pass."""


def glorot_uniform(rng, fan_in, fan_out, shape):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def orthogonal_blocks(rng, hidden, n_blocks):
    """``n_blocks`` orthogonal (hidden, hidden) matrices side by side."""
    blocks = []
    for _ in range(n_blocks):
        q, r = np.linalg.qr(rng.normal(size=(hidden, hidden)))
        blocks.append(q * np.sign(np.diag(r)))
    return np.concatenate(blocks, axis=1)


class Layer:
    kind = "layer"

    def __init__(self):
        self.params = {}
        self.grads = {}
        self._cache = None

    def config(self) -> dict:
        return {}

    def _need_cache(self):
        if self._cache is None:
            raise NotForwardedError(f"{self.kind}: backward() needs a prior forward()")
        return self._cache

    def clear(self):
        self._cache = None

    def output_shape(self, input_shape):
        return input_shape

    def __repr__(self):
        cfg = ", ".join(f"{k}={v}" for k, v in self.config().items())
        return f"{type(self).__name__}({cfg})"


class Dense(Layer):
    kind = "dense"

    def __init__(self, n_in, n_out, activation="relu", rng=None, init="glorot"):
        super().__init__()
        self.n_in, self.n_out, self.activation = int(n_in), int(n_out), activation
        if init == "zeros" or rng is None:
            w = np.zeros((self.n_in, self.n_out))
        else:
            w = glorot_uniform(rng, self.n_in, self.n_out, (self.n_in, self.n_out))
        self.params = {"W": w, "b": np.zeros(self.n_out)}

    def config(self):
        return {"n_in": self.n_in, "n_out": self.n_out, "activation": self.activation}

    def forward(self, x, train=False):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n_in:
            raise ops.ShapeError(
                f"{self.kind}: input shape {x.shape} does not match weight shape {self.params['W'].shape}"
            )
        z = x @ self.params["W"] + self.params["b"]
        self._cache = (x, z)
        return ops.activate(z, self.activation)

    def backward(self, dy):
        x, z = self._need_cache()
        dx, dw, db = ops.dense_backward(dy, x, self.params["W"], z, self.activation)
        self.grads = {"W": dw, "b": db}
        return dx

    def output_shape(self, input_shape):
        return tuple(input_shape[:-1]) + (self.n_out,)


class SoftmaxOutput(Dense):
    """Affine map to ``m`` logits; the softmax itself is applied by the network."""

    kind = "softmax"

    def __init__(self, n_in, m=2, rng=None, init="glorot", activation=None):
        super().__init__(n_in, m, activation=None, rng=rng, init=init)

    def config(self):
        return {"n_in": self.n_in, "m": self.n_out}


class Conv1D(Layer):
    kind = "conv1d"

    def __init__(self, in_channels, filters, kernel, stride=1, activation="relu", rng=None,
                 init="glorot"):
        super().__init__()
        self.in_channels, self.filters, self.kernel = int(in_channels), int(filters), int(kernel)
        self.stride, self.activation = int(stride), activation
        shape = (self.kernel, self.in_channels, self.filters)
        if init == "zeros" or rng is None:
            w = np.zeros(shape)
        else:
            w = glorot_uniform(rng, self.kernel * self.in_channels, self.kernel * self.filters, shape)
        self.params = {"W": w, "b": np.zeros(self.filters)}

    def config(self):
        return {"in_channels": self.in_channels, "filters": self.filters, "kernel": self.kernel,
                "stride": self.stride, "activation": self.activation}

    def forward(self, x, train=False):
        x = np.asarray(x, dtype=np.float64)
        z = ops.conv1d_forward(x, self.params["W"], self.params["b"], self.stride, None)
        self._cache = (x, z)
        return ops.activate(z, self.activation)

    def backward(self, dy):
        x, z = self._need_cache()
        dx, dw, db = ops.conv1d_backward(dy, x, self.params["W"], z, self.stride, self.activation)
        self.grads = {"W": dw, "b": db}
        return dx

    def output_shape(self, input_shape):
        length = -(-input_shape[-2] // self.stride)
        return tuple(input_shape[:-2]) + (length, self.filters)


class MaxPool1D(Layer):
    kind = "maxpool1d"

    def __init__(self, pool=2):
        super().__init__()
        if pool < 1:
            raise ValueError("pool size must be positive")
        self.pool = int(pool)

    def config(self):
        return {"pool": self.pool}

    def forward(self, x, train=False):
        self._cache = np.asarray(x, dtype=np.float64)
        return ops.maxpool1d(self._cache, self.pool)

    def backward(self, dy):
        return ops.maxpool1d_backward(dy, self._need_cache(), self.pool)

    def output_shape(self, input_shape):
        return tuple(input_shape[:-2]) + (input_shape[-2] // self.pool, input_shape[-1])


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x, train=False):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._need_cache())

    def output_shape(self, input_shape):
        return (input_shape[0], int(np.prod(input_shape[1:])))


def _lstm_params(rng, n_in, hidden, init, forget_bias):
    if init == "zeros" or rng is None:
        wx = np.zeros((n_in, 4 * hidden))
        wh = np.zeros((hidden, 4 * hidden))
        b = np.zeros(4 * hidden)
    else:
        wx = glorot_uniform(rng, n_in, 4 * hidden, (n_in, 4 * hidden))
        wh = orthogonal_blocks(rng, hidden, 4)
        b = np.zeros(4 * hidden)
        b[hidden:2 * hidden] = forget_bias
    return wx, wh, b


class LSTM(Layer):
    """Unidirectional LSTM over (N, T, F) input, returning every hidden state."""

    kind = "lstm"

    def __init__(self, n_in, hidden=40, rng=None, init="glorot", forget_bias=1.0):
        super().__init__()
        self.n_in, self.hidden = int(n_in), int(hidden)
        wx, wh, b = _lstm_params(rng, self.n_in, self.hidden, init, forget_bias)
        self.params = {"W_x": wx, "W_h": wh, "b": b}

    def config(self):
        return {"n_in": self.n_in, "hidden": self.hidden}

    def forward(self, x, train=False):
        p = self.params
        hs, caches = ops.lstm_layer_forward(x, p["W_x"], p["W_h"], p["b"])
        self._cache = caches
        return hs

    def backward(self, dy):
        p = self.params
        dx, dwx, dwh, db = ops.lstm_layer_backward(dy, self._need_cache(), p["W_x"], p["W_h"])
        self.grads = {"W_x": dwx, "W_h": dwh, "b": db}
        return dx

    def initial_state(self, n=1):
        return np.zeros((n, self.hidden)), np.zeros((n, self.hidden))

    def step(self, x_t, state):
        """Advance one time step: ``x_t`` is (N, F); returns (h, new_state)."""
        p = self.params
        h, c, _ = ops.lstm_step(x_t, state[0], state[1], p["W_x"], p["W_h"], p["b"])
        return h, (h, c)

    def output_shape(self, input_shape):
        return tuple(input_shape[:-1]) + (self.hidden,)


class BLSTM(Layer):
    """Bidirectional LSTM; output is ``[forward h_t, backward h_t]`` (width 2H)."""

    kind = "blstm"

    def __init__(self, n_in, hidden=40, rng=None, init="glorot", forget_bias=1.0):
        super().__init__()
        self.n_in, self.hidden = int(n_in), int(hidden)
        fwd = _lstm_params(rng, self.n_in, self.hidden, init, forget_bias)
        bwd = _lstm_params(rng, self.n_in, self.hidden, init, forget_bias)
        self.params = {}
        for prefix, trio in (("fwd_", fwd), ("bwd_", bwd)):
            for name, arr in zip(("W_x", "W_h", "b"), trio):
                self.params[prefix + name] = arr

    def config(self):
        return {"n_in": self.n_in, "hidden": self.hidden}

    def _trio(self, prefix):
        p = self.params
        return p[prefix + "W_x"], p[prefix + "W_h"], p[prefix + "b"]

    def forward(self, x, train=False):
        hf, cf = ops.lstm_layer_forward(x, *self._trio("fwd_"))
        hb, cb = ops.lstm_layer_forward(x, *self._trio("bwd_"), reverse=True)
        self._cache = (cf, cb)
        return np.concatenate([hf, hb], axis=-1)

    def backward(self, dy):
        cf, cb = self._need_cache()
        hid = self.hidden
        wxf, whf, _ = self._trio("fwd_")
        wxb, whb, _ = self._trio("bwd_")
        dxf, gf_x, gf_h, gf_b = ops.lstm_layer_backward(dy[..., :hid], cf, wxf, whf)
        dxb, gb_x, gb_h, gb_b = ops.lstm_layer_backward(dy[..., hid:], cb, wxb, whb, reverse=True)
        self.grads = {"fwd_W_x": gf_x, "fwd_W_h": gf_h, "fwd_b": gf_b,
                      "bwd_W_x": gb_x, "bwd_W_h": gb_h, "bwd_b": gb_b}
        return dxf + dxb

    def output_shape(self, input_shape):
        return tuple(input_shape[:-1]) + (2 * self.hidden,)


LAYER_KINDS = {cls.kind: cls for cls in (Dense, SoftmaxOutput, Conv1D, MaxPool1D, Flatten, LSTM, BLSTM)}
