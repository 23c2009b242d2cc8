import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aefl import nn
from aefl.errors import DimensionError, NumericError
from aefl.nn import DenseLayer, Network, TrainConfig


def layer(w, b, act="identity"):
    return DenseLayer(np.asarray(w, dtype=np.float32), np.asarray(b, dtype=np.float32), act)


def fd_gradients(net, x, y, kind, eps=1e-3):
    """Central finite differences over every parameter (independent of backprop)."""
    out = []
    for lyr in net.layers:
        grads = []
        for arr in (lyr.weights, lyr.bias):
            g = np.zeros_like(arr)
            for idx in np.ndindex(arr.shape):
                orig = arr[idx]
                arr[idx] = orig + eps
                up = nn.loss(nn.forward(net, x), y, kind)
                arr[idx] = orig - eps
                down = nn.loss(nn.forward(net, x), y, kind)
                arr[idx] = orig
                g[idx] = (up - down) / (2 * eps)
            grads.append(g)
        out.append(tuple(grads))
    return out


def assert_grad_match(analytic, numeric, rel=1e-3, floor=1e-6):
    for (aw, ab), (nw, nb) in zip(analytic, numeric):
        for a, n in ((aw, nw), (ab, nb)):
            err = np.abs(a - n)
            assert np.all(err <= np.maximum(rel * np.abs(n), floor)), (a, n)


def test_forward_zero_sigmoid_is_half():
    net = Network([layer(np.zeros((3, 4)), np.zeros(3), "sigmoid")])
    out = nn.forward(net, np.random.default_rng(0).normal(size=(5, 4)))
    assert np.all(out == 0.5)


def test_forward_identity():
    net = Network([layer(np.eye(3), np.zeros(3))])
    x = np.array([[1.5, -2.0, 3.25]], dtype=np.float32)
    assert np.array_equal(nn.forward(net, x), x)


def test_forward_hand_computed_two_layer():
    w1, b1 = [[0.5, -1.0], [2.0, 0.25]], [0.1, -0.2]
    w2, b2 = [[1.0, -0.5]], [0.3]
    net = Network([layer(w1, b1, "sigmoid"), layer(w2, b2, "sigmoid")])
    x = [0.4, -0.6]
    sig = lambda v: 1 / (1 + math.exp(-v))
    h = [sig(w1[i][0] * x[0] + w1[i][1] * x[1] + b1[i]) for i in range(2)]
    expected = sig(w2[0][0] * h[0] + w2[0][1] * h[1] + b2[0])
    assert nn.forward(net, np.array([x]))[0, 0] == pytest.approx(expected, rel=1e-6)


def test_forward_shape_mismatch_names_layer():
    net = Network.build([4, 3, 2], ["tanh", "softmax"])
    with pytest.raises(DimensionError, match="layer 0"):
        nn.forward(net, np.zeros((2, 5)))


def test_network_rejects_incompatible_layers():
    with pytest.raises(DimensionError, match="layer 0"):
        Network([layer(np.zeros((3, 2)), np.zeros(3)), layer(np.zeros((1, 4)), np.zeros(1))])


def test_softmax_only_last():
    with pytest.raises(ValueError):
        Network.build([2, 3, 2], ["softmax", "sigmoid"])


def test_forward_does_not_mutate():
    net = Network.build([4, 5, 3], ["relu", "softmax"], seed=3)
    before = [l.weights.copy() for l in net.layers]
    nn.forward(net, np.ones((2, 4)))
    assert all(np.array_equal(a, l.weights) for a, l in zip(before, net.layers))


def test_glorot_init_range():
    net = Network.build([30, 10], ["tanh"], seed=1)
    limit = math.sqrt(6 / 40)
    assert np.all(np.abs(net.layers[0].weights) <= limit)
    assert np.all(net.layers[0].bias == 0)
    assert net.dtype == np.float32


def test_mse_examples():
    x = np.random.default_rng(1).normal(size=(4, 3))
    assert nn.loss(x, x, "mse") == 0.0
    assert nn.loss(np.array([[1.0, 0.0]]), np.array([[0.0, 0.0]]), "mse") == 1.0
    # batch mean of the squared L2 norm, not the element mean
    assert nn.loss(np.array([[1.0, 1.0]]), np.zeros((1, 2)), "mse") == 2.0


@pytest.mark.parametrize("k", [2, 3, 10])
def test_cross_entropy_uniform_is_log_k(k):
    pred = np.full((5, k), 1.0 / k)
    target = np.eye(k)[np.arange(5) % k]
    assert nn.loss(pred, target, "cross_entropy") == pytest.approx(math.log(k), rel=1e-6)


def test_loss_shape_mismatch():
    with pytest.raises(DimensionError):
        nn.loss(np.zeros((2, 3)), np.zeros((2, 4)))


def test_train_step_zero_lr_leaves_weights():
    net = Network.build([3, 4, 2], ["tanh", "softmax"], seed=0)
    before = [l.weights.copy() for l in net.layers]
    x = np.random.default_rng(0).normal(size=(6, 3))
    y = np.eye(2)[np.arange(6) % 2]
    nn.train_step(net, x, y, TrainConfig(learning_rate=0.0, batch_size=6))
    assert all(np.array_equal(a, l.weights) for a, l in zip(before, net.layers))


def test_train_step_perfect_prediction_is_fixed_point():
    net = Network.build([3, 2], ["identity"], seed=0)
    x = np.random.default_rng(0).normal(size=(4, 3)).astype(np.float32)
    y = nn.forward(net, x)
    before = net.copy()
    value = nn.train_step(net, x, y, TrainConfig(0.5, 4, 1, "mse"))
    assert value == 0.0
    for a, b in zip(before.layers, net.layers):
        assert np.array_equal(a.weights, b.weights) and np.array_equal(a.bias, b.bias)


def test_train_step_returns_pre_update_loss():
    net = Network.build([3, 3, 2], ["tanh", "softmax"], seed=4)
    x = np.random.default_rng(2).normal(size=(8, 3))
    y = np.eye(2)[np.arange(8) % 2]
    expected = nn.evaluate(net, x, y)[0]
    assert nn.train_step(net, x, y, TrainConfig(0.1, 8)) == pytest.approx(expected)


@pytest.mark.parametrize(
    "sizes,acts,kind",
    [
        ([3, 4, 2], ["tanh", "softmax"], "cross_entropy"),
        ([3, 4, 3], ["sigmoid", "sigmoid"], "mse"),
        ([4, 3, 2, 4], ["tanh", "relu", "identity"], "mse"),
        ([2, 5, 3], ["relu", "softmax"], "mse"),
        ([5, 2, 5], ["tanh", "sigmoid"], "mse"),
        ([3, 4, 3], ["sigmoid", "sigmoid"], "cross_entropy"),
    ],
)
def test_gradients_match_finite_differences(sizes, acts, kind):
    net = Network.build(sizes, acts, seed=11).astype(np.float64)
    assert nn.param_count(net) <= 50
    rng = np.random.default_rng(5)
    x = rng.normal(size=(3, sizes[0]))
    if kind == "cross_entropy" or acts[-1] == "softmax":
        y = np.eye(sizes[-1])[rng.integers(0, sizes[-1], 3)]
    else:
        y = rng.uniform(size=(3, sizes[-1]))
    # shift relu pre-activations away from the kink
    assert_grad_match(nn.gradients(net, x, y, kind), fd_gradients(net, x, y, kind))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), hidden=st.integers(1, 5), act=st.sampled_from(["tanh", "sigmoid"]))
def test_gradient_oracle_property(seed, hidden, act):
    net = Network.build([3, hidden, 2], [act, "softmax"], seed=seed).astype(np.float64)
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(4, 3))
    y = np.eye(2)[rng.integers(0, 2, 4)]
    kind = "cross_entropy"
    assert_grad_match(nn.gradients(net, x, y, kind), fd_gradients(net, x, y, kind))


def test_non_finite_gradient_raises_with_layer():
    net = Network.build([2, 2, 2], ["identity", "identity"], seed=0)
    net.layers[1].weights[0, 0] = np.inf
    with pytest.raises(NumericError) as info:
        nn.train_step(net, np.ones((1, 2)), np.zeros((1, 2)), TrainConfig(0.1, 1, 1, "mse"))
    assert info.value.layer == 1


def test_hook_fires_once_per_epoch_in_order():
    net = Network.build([2, 2], ["softmax"])
    seen = []
    x = np.zeros((4, 2))
    y = np.eye(2)[[0, 1, 0, 1]]
    nn.train(net, x, y, TrainConfig(0.1, 3, 3), snapshot_hook=seen.append)
    assert seen == [0, 1, 2]


def test_xor_learnable():
    x = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=np.float32)
    y = np.eye(2)[[0, 1, 1, 0]]
    net = Network.build([2, 8, 2], ["tanh", "softmax"], seed=0)
    nn.train(net, x, y, TrainConfig(0.5, 4, 2000))
    assert nn.evaluate(net, x, y)[1] == 1.0


def _blobs(n=200, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    x = rng.normal(size=(n, 2)) * 0.5 + np.where(labels[:, None] == 0, -2.0, 2.0)
    return x.astype(np.float32), np.eye(2)[labels]


def test_loss_mostly_decreases_on_separable_blobs():
    x, y = _blobs()
    net = Network.build([2, 4, 2], ["tanh", "softmax"], seed=1)
    hist = nn.train(net, x, y, TrainConfig(0.05, 16, 30))
    for prev, cur in zip(hist.loss, hist.loss[1:]):
        assert cur <= prev * 1.05


def test_training_is_deterministic():
    x, y = _blobs()

    def run():
        net = Network.build([2, 4, 2], ["tanh", "softmax"], seed=2)
        h = nn.train(net, x, y, TrainConfig(0.1, 16, 5, shuffle_seed=9))
        return h, net

    (h1, n1), (h2, n2) = run(), run()
    assert h1.loss == h2.loss and h1.accuracy == h2.accuracy
    assert all(np.array_equal(a.weights, b.weights) for a, b in zip(n1.layers, n2.layers))


def test_train_rejects_oversized_batch():
    x, y = _blobs(10)
    with pytest.raises(ValueError):
        nn.train(Network.build([2, 2], ["softmax"]), x, y, TrainConfig(0.1, 11))


def test_evaluate_tie_break_lowest_index():
    # zero weights + softmax -> every row predicts class 0
    net = Network([layer(np.zeros((4, 3)), np.zeros(4), "softmax")])
    x = np.random.default_rng(0).normal(size=(8, 3))
    y = np.eye(4)[np.arange(8) % 4]
    loss_value, acc = nn.evaluate(net, x, y)
    assert acc == 0.25
    assert loss_value == pytest.approx(math.log(4), rel=1e-6)


def test_evaluate_memorized_dataset():
    x = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=np.float32)
    y = np.eye(4)
    net = Network.build([2, 16, 4], ["tanh", "softmax"], seed=0)
    nn.train(net, x, y, TrainConfig(0.5, 4, 1500))
    assert nn.evaluate(net, x, y)[1] == 1.0


def test_evaluate_is_pure_and_idempotent():
    x, y = _blobs(50)
    net = Network.build([2, 3, 2], ["tanh", "softmax"], seed=5)
    before = net.copy()
    assert nn.evaluate(net, x, y) == nn.evaluate(net, x, y)
    assert all(np.array_equal(a.weights, b.weights) for a, b in zip(before.layers, net.layers))


def test_evaluate_empty_raises():
    with pytest.raises(ValueError):
        nn.evaluate(Network.build([2, 2], ["softmax"]), np.zeros((0, 2)), np.zeros((0, 2)))


def test_param_count():
    assert nn.param_count(Network.build([784, 20, 10], ["tanh", "softmax"])) == 15_910
    assert nn.param_count(Network.build([2, 2], ["identity"])) == 6
    p, l = 37, 5
    assert nn.param_count(Network.build([p, l, p], ["tanh", "sigmoid"])) == 2 * p * l + l + p


def test_fan_in_step_scale():
    x = np.ones((1, 4), dtype=np.float32)
    y = np.zeros((1, 2), dtype=np.float32)
    a = Network.build([4, 2], ["identity"], seed=0)
    b = a.copy()
    g = nn.gradients(a, x, y, "mse")[0][0]
    nn.train_step(b, x, y, TrainConfig(0.4, 1, 1, "mse", step_scale="fan_in"))
    assert np.allclose(b.layers[0].weights, a.layers[0].weights - 0.1 * g, atol=1e-7)


@pytest.mark.parametrize("kwargs", [dict(batch_size=0), dict(epochs=0), dict(loss="hinge"),
                                    dict(learning_rate=-1.0), dict(step_scale="adam")])
def test_train_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)
