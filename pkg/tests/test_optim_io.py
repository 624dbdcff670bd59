import struct

import numpy as np
import pytest

from sgcn import tensor as T
from sgcn.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from sgcn.errors import CheckpointError, ConfigError, StateError
from sgcn.gradcheck import check_suite, grad_check, relative_error
from sgcn.optim import Adam, adam_step
from sgcn.rng import stream


# ------------------------------------------------------------------ Adam


def test_adam_zero_grad_no_decay_is_noop(rng):
    theta = {"w": rng.normal(size=(3, 2))}
    before = theta["w"].copy()
    opt = Adam(lr=0.1, weight_decay=0.0)
    for _ in range(5):
        opt.step(theta, {"w": np.zeros((3, 2))})
    assert np.array_equal(theta["w"], before)


def test_adam_first_step_is_minus_lr():
    theta = {"w": np.array([0.5])}
    opt = Adam(lr=0.001, weight_decay=0.0)
    opt.step(theta, {"w": np.array([1.0])})
    assert theta["w"][0] == pytest.approx(0.5 - 0.001, abs=1e-9)


def test_adam_matches_hand_recurrences():
    lr, b1, b2, eps, wd = 0.01, 0.9, 0.999, 1e-8, 0.1
    theta = {"w": np.array([1.0])}
    opt = Adam(lr, b1, b2, eps, wd)
    x, m, v = 1.0, 0.0, 0.0
    for t, g in enumerate([0.3, -1.2, 0.7], start=1):
        opt.step(theta, {"w": np.array([g])})
        g = g + wd * x
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
        assert theta["w"][0] == pytest.approx(x, rel=1e-12)
    assert opt.t == 3


def test_adam_quadratic_bowl():
    theta = {"x": np.array([1.0])}
    state = Adam(lr=0.1, weight_decay=0.0)
    for _ in range(200):
        theta, state = adam_step(theta, {"x": 2 * theta["x"]}, state)
    assert abs(theta["x"][0]) < 1e-2


def test_adam_shape_mismatch():
    opt = Adam()
    with pytest.raises(StateError):
        opt.step({"w": np.zeros(3)}, {"w": np.zeros(4)})
    opt.step({"w": np.zeros(3)}, {"w": np.ones(3)})
    with pytest.raises(StateError):
        opt.step({"w": np.zeros(5)}, {"w": np.ones(5)})


def test_adam_state_roundtrip(rng):
    a, b = Adam(lr=0.01), Adam(lr=0.01)
    pa = {"w": rng.normal(size=4)}
    pb = {"w": pa["w"].copy()}
    grads = [rng.normal(size=4) for _ in range(4)]
    for g in grads[:2]:
        a.step(pa, {"w": g})
        b.step(pb, {"w": g})
    c = Adam(lr=0.01)
    c.load_state_arrays(a.state_arrays(), a.t)
    for g in grads[2:]:
        b.step(pb, {"w": g})
        c.step(pa, {"w": g})
    np.testing.assert_array_equal(pa["w"], pb["w"])
    with pytest.raises(StateError):
        c.load_state_arrays({"q.w": np.zeros(4)}, 1)


# ------------------------------------------------------------------ checkpoints


def test_checkpoint_roundtrip(tmp_path, rng):
    tensors = {"encoder.gcn.0.W_in": rng.normal(size=(3, 4)), "scalar": np.float32(2.5), "v": np.arange(5.0)}
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, tensors)
    back = load_checkpoint(path)
    assert list(back) == list(tensors)
    for k in tensors:
        np.testing.assert_array_equal(back[k], np.asarray(tensors[k], dtype=np.float32))
        assert back[k].dtype == np.float32


def test_checkpoint_byte_layout(tmp_path):
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, {"ab": np.array([[1.0, 2.0]])})
    blob = path.read_bytes()
    expected = MAGIC + struct.pack("<I", 1) + struct.pack("<I", 2) + b"ab" + struct.pack("<III", 2, 1, 2)
    expected += np.array([1.0, 2.0], dtype="<f4").tobytes()
    assert blob == expected


def test_checkpoint_corruption(tmp_path):
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, {"w": np.ones(8)})
    blob = path.read_bytes()
    for bad in (b"XXXX1" + blob[5:], blob[:-3], blob + b"\0"):
        path.write_bytes(bad)
        with pytest.raises(CheckpointError):
            load_checkpoint(path)


# ------------------------------------------------------------------ RNG streams


def test_streams_are_reproducible_and_independent():
    a = stream(7, "init").random(5)
    assert np.array_equal(a, stream(7, "init").random(5))
    assert not np.array_equal(a, stream(7, "dropout").random(5))
    assert not np.array_equal(a, stream(8, "init").random(5))
    assert not np.array_equal(stream(7, "shuffle", 1).random(5), stream(7, "shuffle", 2).random(5))


# ------------------------------------------------------------------ grad_check


def test_grad_check_linear_exact(f64, rng):
    w = T.parameter(rng.normal(size=6))
    x = T.Tensor(rng.normal(size=6))
    report = grad_check(lambda: (w * x).sum(), {"w": w}, tol=1e-10)
    assert report.passed and report.max_rel_err <= 1e-10


def test_grad_check_rejects_float32():
    w = T.parameter(np.ones(2))
    with pytest.raises(ConfigError):
        grad_check(lambda: w.sum(), {"w": w})


def test_grad_check_reports_corrupted_backward(f64, rng):
    w = T.parameter(rng.normal(size=(3, 3)))
    report = grad_check(lambda: T.tanh(w @ w).sum(), {"w": w}, corrupt={"tanh": 1.1})
    assert not report.passed
    assert report.failures and "bad w" in report.summary()


def test_grad_check_samples_large_tensors(f64, rng):
    w = T.parameter(rng.normal(size=(20, 20)))
    report = grad_check(lambda: T.sigmoid(w).sum(), {"w": w}, max_coords=15)
    assert report.n_checked == 15 and report.passed


def test_relative_error_floor():
    assert relative_error(0.0, 1e-9) == pytest.approx(1e-3)
    assert relative_error(2.0, 1.0) == pytest.approx(0.5)


def test_gcn_grad_check_three_nodes(f64):
    from sgcn.data import DepGraph
    from sgcn.encoders import GcnLayerParams, batch_edges, gcn_layer

    rng = np.random.default_rng(3)
    layer = GcnLayerParams.init(4, 5, rng)
    layer.b.data[...] = rng.normal(size=layer.b.shape)
    layer.gate_b.data[...] = rng.normal(size=layer.gate_b.shape)
    h = T.parameter(rng.normal(size=(1, 3, 4)))
    edges = batch_edges([DepGraph(3, [(0, 1, 1), (0, 2, 0)])], 3, np.ones((1, 3)))
    w = T.Tensor(rng.normal(size=(1, 3, 4)))
    params = dict(layer.named("gcn"), h=h)
    report = grad_check(lambda: (gcn_layer(h, edges, layer) * w).sum(), params, tol=1e-5)
    assert report.passed, report.summary()


def test_suite_negative_control():
    report = check_suite(["decoder"], corrupt={"masked_softmax": 1.05})["decoder"]
    assert not report.passed
