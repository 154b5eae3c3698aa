"""Sequential stack of layers ending in a softmax over the last axis."""

from __future__ import annotations

import numpy as np

from . import ops
from .layers import LSTM, Layer, NotForwardedError


class Network:
    def __init__(self, layers):
        self.layers = list(layers)
        self._probs = None

    def __repr__(self):
        return "Network([" + ", ".join(map(repr, self.layers)) + "])"

    # parameters ------------------------------------------------------------------
    def parameters(self):
        """Flat list of (layer index, name, array), in a fixed order."""
        return [(i, name, arr) for i, layer in enumerate(self.layers)
                for name, arr in layer.params.items()]

    def gradients(self):
        grads = []
        for i, layer in enumerate(self.layers):
            for name in layer.params:
                if name not in layer.grads:
                    raise NotForwardedError("gradients requested before backward()")
                grads.append(layer.grads[name])
        return grads

    def n_parameters(self) -> int:
        return int(sum(arr.size for _, _, arr in self.parameters()))

    def get_weights(self):
        return [arr.copy() for _, _, arr in self.parameters()]

    def set_weights(self, weights):
        params = self.parameters()
        if len(weights) != len(params):
            raise ValueError("weight list does not match network parameters")
        for (_, name, arr), new in zip(params, weights):
            if arr.shape != np.shape(new):
                raise ops.ShapeError(f"{name}: expected {arr.shape}, got {np.shape(new)}")
            arr[...] = new

    # passes -----------------------------------------------------------------------
    def logits(self, x, train=False):
        out = np.asarray(x, dtype=np.float64)
        for layer in self.layers:
            out = layer.forward(out, train)
        return out

    def forward(self, x, train=False):
        """Class probabilities; caches activations for a following backward()."""
        self._probs = ops.softmax(self.logits(x, train))
        return self._probs

    predict_proba = forward

    def loss(self, x, p_true, mask=None):
        probs = self.forward(x)
        ce = ops.cross_entropy(p_true, probs)
        if mask is None:
            return float(np.mean(ce))
        return float(np.sum(ce * mask) / max(np.sum(mask), 1))

    def backward(self, p_true, mask=None):
        """Gradients of the mean cross-entropy of the last forward() w.r.t. all parameters."""
        if self._probs is None:
            raise NotForwardedError("backward() needs a prior forward()")
        p_true = np.asarray(p_true, dtype=np.float64)
        if p_true.shape != self._probs.shape:
            raise ops.ShapeError(f"targets {p_true.shape} vs outputs {self._probs.shape}")
        dz = self._probs - p_true
        if mask is None:
            dz = dz / np.prod(dz.shape[:-1])
        else:
            dz = dz * (mask / max(np.sum(mask), 1))[..., None]
        for layer in reversed(self.layers):
            dz = layer.backward(dz)
        return self.gradients()

    def loss_and_grad(self, x, p_true, mask=None):
        loss = self.loss(x, p_true, mask)
        return loss, self.backward(p_true, mask)

    def clear(self):
        self._probs = None
        for layer in self.layers:
            layer.clear()

    # streaming -------------------------------------------------------------------
    def initial_state(self):
        return [layer.initial_state(1) if isinstance(layer, LSTM) else None for layer in self.layers]

    def step(self, x_t, state):
        """Feed one time step (F,) through a causal network; returns (pmf, new_state)."""
        out = np.asarray(x_t, dtype=np.float64)[None, :]
        new_state = []
        for layer, s in zip(self.layers, state):
            if isinstance(layer, LSTM):
                out, s = layer.step(out, s)
            elif isinstance(layer, Layer) and layer.kind in ("dense", "softmax"):
                out = ops.dense_forward(out, layer.params["W"], layer.params["b"], layer.activation)
            else:
                raise TypeError(f"{layer.kind} layers cannot be stepped")
            new_state.append(s)
        return ops.softmax(out)[0], new_state


def backward(network: Network, x, p_true, mask=None):
    """Gradient bundle of the cross-entropy loss for input ``x``.

    ``network`` must already hold the activations of a forward pass over ``x``.
    """
    return network.backward(p_true, mask)
