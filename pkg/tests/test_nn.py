import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import max_grad_error
from molcomm.detectors.networks import cnn_layers
from molcomm.nn import (BLSTM, LSTM, Adam, AdamState, Conv1D, Dense, Flatten, MaxPool1D, Network,
                        SoftmaxOutput, adam_step, backward, conv1d_forward, cross_entropy, fit_network,
                        lstm_layer_forward, maxpool1d, one_hot, softmax)
from molcomm.nn.layers import NotForwardedError
from molcomm.nn.ops import ShapeError, same_padding
from molcomm.nn.training import DivergenceError


def naive_conv(x, w, b, stride):
    # direct definition: "same" padding with any odd zero on the right
    length, _ = x.shape
    k, _, f = w.shape
    out_len, left, _ = same_padding(length, k, stride)
    out = np.zeros((out_len, f))
    for o in range(out_len):
        for j in range(k):
            pos = o * stride + j - left
            if 0 <= pos < length:
                out[o] += x[pos] @ w[j]
    return out + b


@pytest.mark.parametrize("length,k,stride", [(9, 4, 1), (30, 2, 1), (7, 6, 1), (10, 3, 2), (5, 8, 1)])
def test_conv_matches_direct_definition(length, k, stride):
    rng = np.random.default_rng(length * k)
    x = rng.normal(size=(length, 3))
    w = rng.normal(size=(k, 3, 4))
    b = rng.normal(size=4)
    np.testing.assert_allclose(conv1d_forward(x, w, b, stride), naive_conv(x, w, b, stride), atol=1e-12)


@pytest.mark.parametrize("k", [3, 4])
@pytest.mark.filterwarnings("ignore::UserWarning")
def test_conv_matches_torch(k):
    torch = pytest.importorskip("torch")
    rng = np.random.default_rng(k)
    x = rng.normal(size=(2, 15, 3))
    w = rng.normal(size=(k, 3, 5))
    b = rng.normal(size=5)
    ref = torch.nn.functional.conv1d(
        torch.tensor(x).permute(0, 2, 1), torch.tensor(w).permute(2, 1, 0), torch.tensor(b), padding="same"
    ).permute(0, 2, 1).numpy()
    np.testing.assert_allclose(conv1d_forward(x, w, b), ref, atol=1e-10)


def test_cnn_shape_trace_for_30_bins():
    layers = cnn_layers(30, np.random.default_rng(0))
    shape = (1, 30, 1)
    trace = []
    for layer in layers:
        shape = layer.output_shape(shape)
        trace.append(shape[1])
    assert trace == [30, 30, 15, 15, 15, 7, 112, 2]
    assert Network(layers).forward(np.zeros((1, 30, 1))).shape == (1, 2)


def test_maxpool_drops_remainder_and_routes_gradient_to_first_max():
    x = np.array([[1.0], [3.0], [3.0], [0.0], [9.0]])
    assert maxpool1d(x, 2).ravel().tolist() == [3.0, 3.0]
    layer = MaxPool1D(2)
    layer.forward(x[None])
    assert layer.backward(np.ones((1, 2, 1)))[0].ravel().tolist() == [0, 1, 1, 0, 0]
    layer.forward(np.array([[[2.0], [2.0]]]))
    assert layer.backward(np.ones((1, 1, 1))).ravel().tolist() == [1, 0]


def _lstm_reference(xs, w_x, w_h, b):
    """Textbook LSTM recurrence with gate order i, f, g, o."""
    sig = lambda z: 1 / (1 + np.exp(-z))
    hid = w_h.shape[0]
    h, c, out = np.zeros(hid), np.zeros(hid), []
    for x in xs:
        z = x @ w_x + h @ w_h + b
        i, f, g, o = sig(z[:hid]), sig(z[hid:2 * hid]), np.tanh(z[2 * hid:3 * hid]), sig(z[3 * hid:])
        c = f * c + i * g
        h = o * np.tanh(c)
        out.append(h)
    return np.array(out)


def test_lstm_forward_matches_textbook_recurrence():
    rng = np.random.default_rng(3)
    layer = LSTM(4, 5, rng=rng)
    xs = rng.normal(size=(7, 4))
    hs, _ = lstm_layer_forward(xs, layer.params["W_x"], layer.params["W_h"], layer.params["b"])
    np.testing.assert_allclose(hs, _lstm_reference(xs, layer.params["W_x"], layer.params["W_h"],
                                                   layer.params["b"]), atol=1e-12)


def test_lstm_forward_matches_torch():
    torch = pytest.importorskip("torch")
    rng = np.random.default_rng(4)
    layer = LSTM(3, 6, rng=rng)
    p = layer.params
    ref = torch.nn.LSTM(3, 6, batch_first=True).double()
    with torch.no_grad():
        ref.weight_ih_l0.copy_(torch.tensor(p["W_x"].T))
        ref.weight_hh_l0.copy_(torch.tensor(p["W_h"].T))
        ref.bias_ih_l0.copy_(torch.tensor(p["b"]))
        ref.bias_hh_l0.zero_()
    xs = rng.normal(size=(2, 9, 3))
    expected = ref(torch.tensor(xs))[0].detach().numpy()
    np.testing.assert_allclose(layer.forward(xs), expected, atol=1e-12)


def test_blstm_backward_half_reads_reversed_sequence():
    rng = np.random.default_rng(5)
    layer = BLSTM(2, 3, rng=rng)
    xs = rng.normal(size=(1, 6, 2))
    out = layer.forward(xs)
    p = layer.params
    rev = _lstm_reference(xs[0, ::-1], p["bwd_W_x"], p["bwd_W_h"], p["bwd_b"])[::-1]
    np.testing.assert_allclose(out[0, :, 3:], rev, atol=1e-12)


def test_adam_matches_torch():
    torch = pytest.importorskip("torch")
    rng = np.random.default_rng(6)
    w = rng.normal(size=(3, 2))
    tw = torch.tensor(w.copy(), requires_grad=True)
    opt = torch.optim.Adam([tw], lr=0.01)
    state = AdamState.like([w])
    for _ in range(5):
        g = rng.normal(size=w.shape)
        adam_step([w], [g], state, lr=0.01)
        opt.zero_grad()
        tw.grad = torch.tensor(g)
        opt.step()
    np.testing.assert_allclose(w, tw.detach().numpy(), atol=1e-12)


def test_adam_first_step_moves_by_lr_times_sign():
    w = np.array([1.0, -2.0, 0.5])
    adam_step([w], [np.array([3.0, -0.1, 1e-3])], AdamState.like([w]), lr=0.1)
    np.testing.assert_allclose(w, [0.9, -1.9, 0.4], atol=1e-6)


def test_adam_rejects_bad_learning_rate():
    w = np.zeros(2)
    with pytest.raises(ValueError):
        adam_step([w], [w.copy()], AdamState.like([w]), lr=0.0)


@pytest.mark.parametrize("seed", range(3))
def test_gradients_dense_and_conv(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(4, 5))
    t = one_hot(rng.integers(0, 2, 4))
    net = Network([Dense(5, 6, rng=rng), Dense(6, 6, None, rng=rng), SoftmaxOutput(6, 2, rng=rng)])
    assert max_grad_error(net, x, t) < 1e-4
    x = rng.normal(size=(3, 9, 2))
    net = Network([Conv1D(2, 3, 4, activation=None, rng=rng), Conv1D(3, 3, 3, stride=2, rng=rng),
                   MaxPool1D(2), Flatten(), SoftmaxOutput(6, 2, rng=rng)])
    assert max_grad_error(net, x, t[:3]) < 1e-4


@pytest.mark.parametrize("seed", range(2))
def test_gradients_recurrent_with_mask(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(2, 5, 3))
    t = one_hot(rng.integers(0, 2, (2, 5)))
    mask = np.ones((2, 5))
    mask[1, 3:] = 0
    net = Network([LSTM(3, 4, rng=rng), SoftmaxOutput(4, 2, rng=rng)])
    assert max_grad_error(net, x, t, mask=mask) < 1e-4
    net = Network([BLSTM(3, 3, rng=rng), SoftmaxOutput(6, 2, rng=rng)])
    assert max_grad_error(net, x, t) < 1e-4


@pytest.mark.parametrize("make,shape", [
    (lambda: Network([Dense(11, 80, init="zeros"), SoftmaxOutput(80, 2, init="zeros")]), (3, 11)),
    (lambda: Network(cnn_layers(30, init="zeros")), (3, 30, 1)),
    (lambda: Network([LSTM(10, 40, init="zeros"), SoftmaxOutput(40, 2, init="zeros")]), (3, 4, 10)),
    (lambda: Network([BLSTM(10, 40, init="zeros"), SoftmaxOutput(80, 2, init="zeros")]), (3, 4, 10)),
])
def test_zero_initialised_networks_output_uniform(make, shape):
    x = np.random.default_rng(0).normal(size=shape)
    np.testing.assert_allclose(make().forward(x), 0.5)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(2, 5)),
              elements=st.floats(-500, 500, allow_nan=False)))
def test_softmax_is_a_pmf(logits):
    p = softmax(logits)
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-12)


def test_cross_entropy_clamps_zero_probability():
    assert cross_entropy([1.0, 0.0], [0.0, 1.0]) == pytest.approx(-np.log(1e-12))
    assert cross_entropy([0.0, 1.0], [0.5, 0.5]) == pytest.approx(np.log(2))


def test_shape_and_order_errors():
    rng = np.random.default_rng(0)
    net = Network([Dense(3, 4, rng=rng), SoftmaxOutput(4, 2, rng=rng)])
    with pytest.raises(ShapeError):
        net.forward(np.zeros((2, 5)))
    with pytest.raises(NotForwardedError):
        Network([Dense(3, 4, rng=rng)]).backward(np.zeros((1, 4)))
    with pytest.raises(NotForwardedError):
        Conv1D(1, 2, 2, rng=rng).backward(np.zeros((1, 3, 2)))
    net.forward(np.zeros((2, 3)))
    with pytest.raises(ShapeError):
        backward(net, np.zeros((2, 3)), np.zeros((3, 2)))
    with pytest.raises(ShapeError):
        LSTM(3, 4, rng=rng).forward(np.zeros((1, 0, 3)))


def test_weights_roundtrip_and_shape_check():
    rng = np.random.default_rng(1)
    net = Network([LSTM(3, 4, rng=rng), SoftmaxOutput(4, 2, rng=rng)])
    other = Network([LSTM(3, 4, rng=np.random.default_rng(2)), SoftmaxOutput(4, 2, rng=rng)])
    other.set_weights(net.get_weights())
    x = rng.normal(size=(1, 5, 3))
    np.testing.assert_array_equal(net.forward(x), other.forward(x))
    with pytest.raises(ShapeError):
        other.set_weights([w[..., :1] for w in net.get_weights()])


def test_stepwise_lstm_equals_whole_sequence():
    rng = np.random.default_rng(7)
    net = Network([LSTM(3, 5, rng=rng), LSTM(5, 5, rng=rng), SoftmaxOutput(5, 2, rng=rng)])
    xs = rng.normal(size=(8, 3))
    whole = net.forward(xs[None])[0]
    state = net.initial_state()
    steps = []
    for x in xs:
        p, state = net.step(x, state)
        steps.append(p)
    np.testing.assert_allclose(steps, whole, atol=1e-14)


def test_fit_network_learns_separable_data_and_is_reproducible():
    def run():
        rng = np.random.default_rng(0)
        x = rng.normal(size=(60, 2))
        t = one_hot((x[:, 0] + x[:, 1] > 0).astype(int))
        net = Network([Dense(2, 8, rng=rng), SoftmaxOutput(8, 2, rng=rng)])
        batches = lambda g: [(x[i::3], t[i::3], None) for i in range(3)]
        return net, fit_network(net, batches, 150, 0.05, rng), x, t

    net, curve, x, t = run()
    assert curve[-1] < curve[0]
    assert np.mean(net.forward(x).argmax(1) == t.argmax(1)) > 0.95
    assert run()[1] == curve


def test_fit_network_zero_epochs_leaves_weights():
    rng = np.random.default_rng(0)
    net = Network([Dense(2, 3, rng=rng), SoftmaxOutput(3, 2, rng=rng)])
    before = net.get_weights()
    assert fit_network(net, lambda g: [], 0, 1e-3, rng) == []
    for a, b in zip(before, net.get_weights()):
        np.testing.assert_array_equal(a, b)


def test_fit_network_reports_divergence():
    rng = np.random.default_rng(0)
    net = Network([Dense(2, 3, rng=rng), SoftmaxOutput(3, 2, rng=rng)])
    bad = np.array([[np.nan, 0.0]])
    with pytest.raises(DivergenceError, match="epoch 0"):
        fit_network(net, lambda g: [(bad, one_hot([0]), None)], 2, 1e-3, rng)


def test_adam_class_updates_registered_arrays():
    w = np.ones(3)
    opt = Adam([w], lr=0.5)
    opt.step([np.ones(3)])
    assert np.all(w < 1)
