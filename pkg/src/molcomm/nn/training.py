from __future__ import annotations

import logging

import numpy as np

from .network import Network
from .optim import Adam

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    """Training loss became NaN or infinite."""


def fit_network(net: Network, make_batches, epochs: int, lr: float, rng: np.random.Generator):
    """Mini-batch Adam on the mean cross-entropy.

    ``make_batches(rng)`` returns the epoch's list of ``(x, p_true, mask)``
    batches (mask may be None); it owns shuffling.  Returns the per-epoch mean
    training loss, weighted by batch size.
    """
    opt = Adam([arr for _, _, arr in net.parameters()], lr=lr)
    curve = []
    for epoch in range(epochs):
        total, count = 0.0, 0
        for x, p_true, mask in make_batches(rng):
            loss, grads = net.loss_and_grad(x, p_true, mask)
            if not np.isfinite(loss) or not all(np.isfinite(g).all() for g in grads):
                raise DivergenceError(
                    f"non-finite loss/gradient at epoch {epoch} (loss={loss}); "
                    f"lr={lr}, batch shape {np.shape(x)}"
                )
            opt.step(grads)
            w = float(np.sum(mask)) if mask is not None else float(np.prod(np.shape(p_true)[:-1]))
            total += loss * w
            count += w
        curve.append(total / max(count, 1.0))
        if epoch % 50 == 0 or epoch == epochs - 1:
            log.debug("epoch %d loss %.5f", epoch, curve[-1])
    net.clear()
    return curve
