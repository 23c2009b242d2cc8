import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from aefl import nn
from aefl.codec import (
    ModelShape,
    NormStats,
    WeightDataset,
    append_snapshot,
    denormalize,
    fit_norm,
    flatten,
    normalize,
    snapshot_hooks,
    unflatten,
)
from aefl.errors import CodecError
from aefl.nn import Network, TrainConfig

finite32 = st.floats(-1e3, 1e3, allow_nan=False, width=32)


def test_flatten_layout_weights_then_bias():
    net = Network.build([2, 3], ["identity"], seed=0)
    net.layers[0].weights[...] = np.arange(6).reshape(3, 2)
    net.layers[0].bias[...] = [10, 11, 12]
    assert flatten(net).tolist() == [0, 1, 2, 3, 4, 5, 10, 11, 12]


def test_flatten_length_and_dtype():
    net = Network.build([784, 20, 10], ["tanh", "softmax"])
    flat = flatten(net)
    assert flat.shape == (15_910,) and flat.dtype == np.float32


def test_unflatten_roundtrip_bit_exact():
    net = Network.build([5, 4, 3, 2], ["tanh", "relu", "softmax"], seed=7)
    shape = ModelShape.of(net)
    again = unflatten(shape, flatten(net))
    assert flatten(again).tobytes() == flatten(net).tobytes()
    assert ModelShape.of(again) == shape


def test_unflatten_in_place():
    net = Network.build([3, 2], ["sigmoid"], seed=1)
    target = Network.build([3, 2], ["sigmoid"], seed=2)
    w = target.layers[0].weights
    unflatten(ModelShape.of(net), flatten(net), target)
    assert target.layers[0].weights is w
    assert np.array_equal(flatten(target), flatten(net))


def test_unflatten_length_mismatch():
    shape = ModelShape.from_sizes([3, 2], ["sigmoid"])
    with pytest.raises(CodecError) as info:
        unflatten(shape, np.zeros(7))
    assert (info.value.expected, info.value.actual) == (8, 7)


@settings(max_examples=30, deadline=None)
@given(sizes=st.lists(st.integers(1, 6), min_size=2, max_size=4), seed=st.integers(0, 1000))
def test_flatten_unflatten_property(sizes, seed):
    acts = ["tanh"] * (len(sizes) - 1)
    net = Network.build(sizes, acts, seed=seed)
    flat = flatten(net)
    assert flat.size == nn.param_count(net)
    assert np.array_equal(flatten(unflatten(ModelShape.of(net), flat)), flat)


def test_normalize_examples():
    stats = NormStats([0.0, -1.0, 2.0], [2.0, 1.0, 2.0])
    assert normalize([1.0, 1.0, 2.0], stats).tolist() == [0.5, 1.0, 0.5]
    # out-of-range values are clamped
    assert normalize([5.0, -3.0, 9.0], stats).tolist() == [1.0, 0.0, 0.5]


def test_degenerate_parameter_roundtrip():
    stats = NormStats([3.0, 0.0], [3.0, 1.0])
    y = normalize([3.0, 0.25], stats)
    assert y[0] == 0.5
    assert denormalize(y, stats)[0] == 3.0


def test_normalize_in_unit_interval_and_stack():
    rng = np.random.default_rng(0)
    snaps = rng.normal(size=(12, 30)).astype(np.float32)
    stats = fit_norm(snaps)
    y = normalize(snaps, stats)
    assert y.shape == snaps.shape and y.min() >= 0 and y.max() <= 1
    assert np.all(y.min(axis=0) == 0) and np.all(y.max(axis=0) == 1)


@settings(max_examples=60, deadline=None)
@given(
    data=arrays(np.float32, st.tuples(st.integers(1, 8), st.integers(1, 20)), elements=finite32),
)
def test_denormalize_normalize_property(data):
    stats = fit_norm(data)
    back = denormalize(normalize(data, stats), stats)
    span = (stats.max - stats.min).astype(np.float64)
    tol = 1e-6 + 1e-6 * np.maximum(span, np.abs(stats.max))
    assert np.all(np.abs(back.astype(np.float64) - data) <= tol)


def test_length_mismatch_errors():
    stats = NormStats(np.zeros(3), np.ones(3))
    with pytest.raises(CodecError):
        normalize(np.zeros(4), stats)
    with pytest.raises(CodecError):
        denormalize(np.zeros(2), stats)


def test_fit_norm_empty():
    with pytest.raises(ValueError):
        fit_norm(WeightDataset(4))


def test_fit_norm_bounds():
    ds = WeightDataset.from_array([[1, 5], [3, -2], [2, 0]])
    stats = fit_norm(ds)
    assert stats.min.tolist() == [1, -2] and stats.max.tolist() == [3, 5]


def test_snapshots_per_epoch_count_and_copy():
    x = np.random.default_rng(0).normal(size=(20, 3)).astype(np.float32)
    y = np.eye(2)[np.arange(20) % 2]
    net = Network.build([3, 2], ["softmax"], seed=0)
    ds = WeightDataset(nn.param_count(net), ModelShape.of(net))
    on_epoch, on_batch = snapshot_hooks(ds, net)
    nn.train(net, x, y, TrainConfig(0.5, 5, 6), on_epoch, on_batch)
    assert len(ds) == 6
    assert np.array_equal(ds.snapshots[-1], flatten(net))
    assert not np.array_equal(ds.snapshots[0], ds.snapshots[-1])


def test_snapshots_per_n_batches():
    x = np.zeros((20, 3), dtype=np.float32)
    y = np.eye(2)[np.arange(20) % 2]
    net = Network.build([3, 2], ["softmax"])
    ds = WeightDataset(8, snapshot_interval="per_n_batches:3")
    on_epoch, on_batch = snapshot_hooks(ds, net)
    nn.train(net, x, y, TrainConfig(0.1, 5, 3), on_epoch, on_batch)  # 12 batches
    assert len(ds) == 4


def test_append_snapshot_shape_mismatch():
    ds = WeightDataset(5)
    with pytest.raises(CodecError):
        append_snapshot(ds, Network.build([3, 2], ["softmax"]))
