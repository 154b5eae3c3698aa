import numpy as np
import pytest

from molcomm.channel import SurrogateChannel, exponential_taps
from molcomm.framing import FrameSpec, random_bits
from molcomm.modem import Reception, receive


def max_grad_error(net, x, p_true, h=1e-5, mask=None):
    """Worst |analytic - numeric| / max(|a| + |n|, 1e-6) over every parameter entry.

    The 1e-6 floor keeps round-off on near-zero entries (central differences
    carry ~1e-11 absolute noise) from dominating the relative measure.
    """
    _, grads = net.loss_and_grad(x, p_true, mask)
    worst = 0.0
    for (_, _, arr), g in zip(net.parameters(), grads):
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = arr[idx]
            arr[idx] = old + h
            lp = net.loss(x, p_true, mask)
            arr[idx] = old - h
            lm = net.loss(x, p_true, mask)
            arr[idx] = old
            num = (lp - lm) / (2 * h)
            worst = max(worst, abs(num - g[idx]) / max(abs(num) + abs(g[idx]), 1e-6))
    return worst


def surrogate_receptions(n, k, spec_ms=250, noise=0.0, taps=(1.0,), seed=0):
    spec = FrameSpec.from_symbol_ms(spec_ms)
    rng = np.random.default_rng(seed)
    channel = SurrogateChannel(isi_taps=tuple(taps), noise_std=noise)
    X, y = [], []
    for _ in range(n):
        bits = random_bits(k, rng)
        onset, windows = receive(channel.transmit(bits, spec, rng=rng), spec, k)
        X.append(Reception(windows, spec, onset))
        y.append(bits)
    return X, y


@pytest.fixture(scope="session")
def clean_surrogate():
    return surrogate_receptions(12, 20, noise=0.0, seed=1)


@pytest.fixture(scope="session")
def isi_surrogate():
    return surrogate_receptions(16, 30, noise=0.05, taps=exponential_taps(3, 0.7), seed=2)


# one summary line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
