"""Forward and backward kernels for the layer kinds used by the detectors.

Conventions: float64 throughout, channels-last.  Dense weights are
``(in, out)``; conv weights are ``(kernel, in_channels, filters)``; LSTM
weights stack the gates as ``[input, forget, candidate, output]`` along the
last axis, so ``W_x`` is ``(in, 4H)``, ``W_h`` is ``(H, 4H)``, ``b`` is ``(4H,)``.
"""

from __future__ import annotations

import math

import numpy as np

LOG_EPS = 1e-12


class ShapeError(ValueError):
    """Operand shapes violate a layer contract."""


def _check_inner(x, w, what):
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"{what}: input shape {x.shape} does not match weight shape {w.shape}")


# -- activations --------------------------------------------------------------

def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def activate(z, activation):
    if activation == "relu":
        return relu(z)
    if activation in (None, "identity", "linear"):
        return z
    raise ValueError(f"unknown activation {activation!r}")


def activation_grad(z, dy, activation):
    if activation == "relu":
        return dy * (z > 0)
    return dy


# -- dense ----------------------------------------------------------------------

def dense_forward(x, w, b, activation=None):
    """``activation(x @ w + b)`` over the last axis of ``x``."""
    x = np.asarray(x, dtype=np.float64)
    _check_inner(x, w, "dense")
    return activate(x @ w + b, activation)


def dense_backward(dy, x, w, z, activation=None):
    dz = activation_grad(z, dy, activation)
    x2 = x.reshape(-1, x.shape[-1])
    dz2 = dz.reshape(-1, dz.shape[-1])
    return dz @ w.T, x2.T @ dz2, dz2.sum(axis=0)


# -- 1-D convolution, "same" zero padding -------------------------------------

def same_padding(length: int, kernel: int, stride: int = 1):
    out_len = math.ceil(length / stride)
    total = max((out_len - 1) * stride + kernel - length, 0)
    return out_len, total // 2, total - total // 2


def _patch_index(length, kernel, stride):
    out_len, left, _ = same_padding(length, kernel, stride)
    return out_len, left, stride * np.arange(out_len)[:, None] + np.arange(kernel)[None, :]


def conv1d_forward(x, w, b, stride: int = 1, activation=None):
    """Cross-correlate ``x`` of shape (N, length, C_in) with ``w`` (k, C_in, F)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return conv1d_forward(x[None], w, b, stride, activation)[0]
    if x.shape[1] < 1:
        raise ShapeError("conv1d input must have at least one position")
    if stride < 1:
        raise ValueError("stride must be positive")
    k, c_in, _ = w.shape
    if x.shape[2] != c_in:
        raise ShapeError(f"conv1d: input shape {x.shape} does not match weight shape {w.shape}")
    out_len, left, idx = _patch_index(x.shape[1], k, stride)
    xp = np.zeros((x.shape[0], idx.max() + 1, c_in))
    xp[:, left:left + x.shape[1]] = x[:, : xp.shape[1] - left]
    patches = xp[:, idx]  # (N, out_len, k, C_in)
    z = np.tensordot(patches, w, axes=([2, 3], [0, 1])) + b
    return activate(z, activation)


def conv1d_backward(dy, x, w, z, stride: int = 1, activation=None):
    dz = activation_grad(z, dy, activation)
    k, c_in, _ = w.shape
    out_len, left, idx = _patch_index(x.shape[1], k, stride)
    xp = np.zeros((x.shape[0], idx.max() + 1, c_in))
    xp[:, left:left + x.shape[1]] = x[:, : xp.shape[1] - left]
    patches = xp[:, idx]
    dw = np.tensordot(patches, dz, axes=([0, 1], [0, 1]))
    db = dz.sum(axis=(0, 1))
    dpatch = np.tensordot(dz, w, axes=([2], [2]))  # (N, out_len, k, C_in)
    dxp = np.zeros_like(xp)
    for j in range(k):
        dxp[:, idx[:, j]] += dpatch[:, :, j]
    return dxp[:, left:left + x.shape[1]], dw, db


# -- max pooling ------------------------------------------------------------------

def maxpool1d(x, pool: int):
    """Non-overlapping max pooling over axis -2; the trailing remainder is dropped."""
    if pool < 1:
        raise ValueError("pool size must be positive")
    x = np.asarray(x, dtype=np.float64)
    n_out = x.shape[-2] // pool
    trimmed = x[..., : n_out * pool, :]
    blocks = trimmed.reshape(x.shape[:-2] + (n_out, pool, x.shape[-1]))
    return blocks.max(axis=-2)


def maxpool1d_backward(dy, x, pool: int):
    n_out = x.shape[-2] // pool
    blocks = x[..., : n_out * pool, :].reshape(x.shape[:-2] + (n_out, pool, x.shape[-1]))
    winner = blocks.argmax(axis=-2)  # first maximum wins ties
    mask = np.arange(pool)[:, None] == winner[..., None, :]
    dblocks = mask * dy[..., None, :]
    dx = np.zeros_like(x)
    dx[..., : n_out * pool, :] = dblocks.reshape(x.shape[:-2] + (n_out * pool, x.shape[-1]))
    return dx


# -- softmax / cross-entropy ----------------------------------------------------

def softmax(x, axis=-1):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def cross_entropy(p_true, p_est, eps=LOG_EPS):
    """Sum over the last axis of ``-p_true * log(p_est)``, with p_est clamped at eps."""
    p_true = np.asarray(p_true, dtype=np.float64)
    p_est = np.clip(np.asarray(p_est, dtype=np.float64), eps, None)
    out = -(p_true * np.log(p_est)).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def one_hot(labels, m: int = 2):
    labels = np.asarray(labels, dtype=int)
    return np.eye(m)[labels]


# -- LSTM ---------------------------------------------------------------------------

def lstm_step(x_t, h_prev, c_prev, w_x, w_h, b):
    """One LSTM update without peepholes; returns ``(h_t, c_t, cache)``."""
    x_t = np.asarray(x_t, dtype=np.float64)
    _check_inner(x_t, w_x, "lstm input")
    if h_prev.shape[-1] != w_h.shape[0] or c_prev.shape != h_prev.shape:
        raise ShapeError(f"lstm state shapes {h_prev.shape}/{c_prev.shape} vs W_h {w_h.shape}")
    hid = w_h.shape[0]
    z = x_t @ w_x + h_prev @ w_h + b
    i = sigmoid(z[..., :hid])
    f = sigmoid(z[..., hid:2 * hid])
    g = np.tanh(z[..., 2 * hid:3 * hid])
    o = sigmoid(z[..., 3 * hid:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (x_t, h_prev, c_prev, i, f, g, o, tc)


def lstm_step_backward(dh, dc, cache, w_x, w_h):
    x_t, h_prev, c_prev, i, f, g, o, tc = cache
    do = dh * tc
    dc = dc + dh * o * (1.0 - tc * tc)
    di = dc * g
    dg = dc * i
    df = dc * c_prev
    dc_prev = dc * f
    dz = np.concatenate(
        [di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g), do * o * (1 - o)], axis=-1
    )
    return dz @ w_x.T, dz @ w_h.T, dc_prev, x_t.T @ dz, h_prev.T @ dz, dz.sum(axis=0)


def lstm_layer_forward(xs, w_x, w_h, b, reverse: bool = False):
    """Run an LSTM over ``xs`` (N, T, F) or (T, F) from zero state.

    Returns ``(hs, caches)``; with ``reverse`` the sequence is consumed back to
    front and ``hs[t]`` is the state after reading ``xs[T-1..t]``.
    """
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim == 2:
        hs, caches = lstm_layer_forward(xs[None], w_x, w_h, b, reverse)
        return hs[0], caches
    n, steps, _ = xs.shape
    if steps == 0:
        raise ShapeError("LSTM needs a nonempty sequence")
    hid = w_h.shape[0]
    h = np.zeros((n, hid))
    c = np.zeros((n, hid))
    hs = np.empty((n, steps, hid))
    caches = [None] * steps
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    for t in order:
        h, c, caches[t] = lstm_step(xs[:, t], h, c, w_x, w_h, b)
        hs[:, t] = h
    return hs, caches


def lstm_layer_backward(dhs, caches, w_x, w_h, reverse: bool = False):
    n, steps, hid = dhs.shape
    dxs = np.empty((n, steps, w_x.shape[0]))
    dwx = np.zeros_like(w_x)
    dwh = np.zeros_like(w_h)
    db = np.zeros(w_h.shape[1])
    dh_next = np.zeros((n, hid))
    dc_next = np.zeros((n, hid))
    order = range(steps) if reverse else range(steps - 1, -1, -1)
    for t in order:
        dx, dh_next, dc_next, gwx, gwh, gb = lstm_step_backward(
            dhs[:, t] + dh_next, dc_next, caches[t], w_x, w_h
        )
        dxs[:, t] = dx
        dwx += gwx
        dwh += gwh
        db += gb
    return dxs, dwx, dwh, db


def blstm_layer_forward(xs, fwd, bwd):
    """Concatenate a forward pass with ``fwd=(W_x, W_h, b)`` and a reversed pass with ``bwd``."""
    hf, _ = lstm_layer_forward(xs, *fwd)
    hb, _ = lstm_layer_forward(xs, *bwd, reverse=True)
    return np.concatenate([hf, hb], axis=-1)
