import numpy as np
import pytest

from sgcn import tensor as T
from sgcn.errors import ConfigError, DataError, DimensionError, NumericError, VocabularyError
from sgcn.gradcheck import grad_check


def fd_check(fn, *arrays, tol=1e-4):
    """Tape gradient of ``fn(*tensors)`` vs central differences, all coordinates."""
    params = {f"x{i}": T.parameter(a) for i, a in enumerate(arrays)}
    report = grad_check(lambda: fn(*params.values()), params, eps=1e-5, tol=tol)
    assert report.passed, report.summary()
    return report


def test_matmul_examples():
    eye = T.Tensor(np.eye(2))
    m = T.Tensor([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal((eye @ m).data, m.data)
    assert (T.Tensor([[1.0, 2.0]]) @ T.Tensor([[3.0], [4.0]])).data.tolist() == [[11.0]]


def test_matmul_grad_is_ones_times_bT(f64, rng):
    a = T.parameter(rng.normal(size=(3, 4)))
    b = T.parameter(rng.normal(size=(4, 2)))
    tape = T.Tape()
    with tape:
        out = (a @ b).sum()
    tape.backward(out)
    np.testing.assert_allclose(a.grad, np.ones((3, 2)) @ b.data.T, rtol=1e-12)
    fd_check(lambda x, y: (x @ y).sum(), a.data, b.data)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        T.Tensor(np.zeros((2, 3))) @ T.Tensor(np.zeros((2, 3)))


def test_pointwise_values():
    assert T.pointwise("relu", T.Tensor([-1.0, 0.0, 2.0])).data.tolist() == [0.0, 0.0, 2.0]
    assert T.pointwise("sigmoid", T.Tensor([0.0])).data.tolist() == [0.5]
    with pytest.raises(ConfigError):
        T.pointwise("gelu", T.Tensor([0.0]))


def test_sigmoid_is_stable_for_large_inputs():
    out = T.sigmoid(T.Tensor(np.array([-800.0, 800.0]), dtype=np.float64)).data
    assert out.tolist() == [0.0, 1.0]


def test_tanh_grad_matches_fd(f64):
    fd_check(lambda x: T.tanh(x).sum(), np.array([0.3, -0.7]))


@pytest.mark.parametrize("op", ["add", "sub", "mul"])
def test_binary_ops_with_trailing_broadcast(f64, rng, op):
    fn = {"add": T.add, "sub": T.sub, "mul": T.mul}[op]
    w = rng.normal(size=(4, 5))
    fd_check(lambda x, v: (fn(x, v) * T.Tensor(w)).sum(), rng.normal(size=(4, 5)), rng.normal(size=5))


def test_broadcast_mismatch_raises():
    with pytest.raises(DimensionError):
        T.Tensor(np.zeros((2, 3))) + T.Tensor(np.zeros(4))


@pytest.mark.parametrize("shape", [(1, 1), (3, 8), (8, 8), (5, 2)])
def test_random_shape_backward_up_to_8x8(f64, shape):
    rng = np.random.default_rng(sum(shape))
    x = rng.normal(size=shape)
    w = rng.normal(size=(shape[1], 3))
    fd_check(lambda a: (T.sigmoid(a) * T.tanh(a) + T.relu(a)).sum() + (a @ T.Tensor(w)).sum(), x)


def test_shape_ops_grads(f64, rng):
    x = rng.normal(size=(2, 3, 4))
    w = rng.normal(size=(3, 8))

    def fn(a):
        parts = T.concat([a[:, 1:], a[:, :1]], axis=1)
        stacked = T.stack([parts[0], parts[1]], axis=0)
        flat = stacked.reshape(2, 12).reshape(6, 4)
        return (T.mean(flat) + (T.sum_(a, axis=2) * T.Tensor(w[:, :2].T)).sum())

    fd_check(fn, x)


def test_gather_scatter_grads(f64, rng):
    idx = np.array([2, 0, 2, 1, 2])
    v = rng.normal(size=(5, 3))
    fd_check(lambda x: (T.gather_rows(x, idx) * T.Tensor(v)).sum(), rng.normal(size=(3, 3)))
    w = rng.normal(size=(4, 3))
    fd_check(lambda x: (T.scatter_add_rows(x, idx, 4) * T.Tensor(w)).sum(), rng.normal(size=(5, 3)))


def test_scatter_add_rows_values():
    x = T.Tensor(np.arange(6.0).reshape(3, 2))
    out = T.scatter_add_rows(x, [1, 1, 0], 3).data
    assert out.tolist() == [[4.0, 5.0], [2.0, 4.0], [0.0, 0.0]]


def test_getitem_rejects_fancy_indexing():
    with pytest.raises(DimensionError):
        T.Tensor(np.zeros(4))[np.array([0, 1])]


def test_softmax_rows_sum_to_one(rng):
    out = T.softmax(T.Tensor(rng.normal(size=(6, 9)) * 10))
    np.testing.assert_allclose(out.data.sum(axis=-1), 1.0, atol=1e-6)


def test_masked_softmax(f64, rng):
    mask = np.array([[1, 1, 0], [1, 0, 0]], dtype=bool)
    out = T.masked_softmax(T.Tensor(rng.normal(size=(2, 3))), mask).data
    assert out[0, 2] == 0.0 and out[1].tolist() == [1.0, 0.0, 0.0]
    w = rng.normal(size=(2, 3))
    fd_check(lambda x: (T.masked_softmax(x, mask) * T.Tensor(w)).sum(), rng.normal(size=(2, 3)))
    with pytest.raises(DataError):
        T.masked_softmax(T.Tensor(np.zeros((1, 2))), np.zeros((1, 2), dtype=bool))


def test_softmax_xent_examples(f64, rng):
    loss = T.softmax_xent(T.Tensor(np.zeros((3, 4))), [0, 1, 3])
    assert loss.item() == pytest.approx(np.log(4))
    big = np.full((1, 4), -1e4)
    big[0, 2] = 1e4
    assert T.softmax_xent(T.Tensor(big), [2]).item() == pytest.approx(0.0, abs=1e-12)
    logits = rng.normal(size=(2, 3))
    ids = [2, 0]
    direct = -np.mean([logits[r, i] - np.log(np.exp(logits[r]).sum()) for r, i in enumerate(ids)])
    assert T.softmax_xent(T.Tensor(logits), ids).item() == pytest.approx(direct, rel=1e-12)


def test_softmax_xent_mask_and_grad(f64, rng):
    mask = [1, 0, 1]
    logits = rng.normal(size=(3, 5))
    full = T.softmax_xent(T.Tensor(logits), [1, 4, 2], mask).item()
    assert full == pytest.approx(T.softmax_xent(T.Tensor(logits[[0, 2]]), [1, 2]).item())
    fd_check(lambda x: T.softmax_xent(x, [1, 4, 2], mask), logits)
    # masked rows may hold any id, even out of range
    T.softmax_xent(T.Tensor(logits), [1, 99, 2], mask)
    with pytest.raises(VocabularyError):
        T.softmax_xent(T.Tensor(logits), [1, 5, 2])


def test_dropout_contract(rng):
    x = T.Tensor(np.ones(100000))
    assert T.dropout(x, 0.0, True, rng) is x
    assert T.dropout(x, 0.5, False, rng) is x
    out = T.dropout(x, 0.2, True, rng).data
    assert abs((out > 0).mean() - 0.8) <= 0.01
    assert set(np.unique(out)) <= {0.0, np.float32(1 / 0.8)}
    for p in (1.0, -0.1):
        with pytest.raises(ConfigError):
            T.dropout(x, p, True, rng)


def test_dropout_preserves_expectation(rng):
    x = T.Tensor(rng.uniform(0.5, 1.5, size=20))
    means = [T.dropout(x, 0.2, True, rng).data.mean() for _ in range(10000)]
    assert abs(np.mean(means) - x.data.mean()) <= 0.02 * x.data.mean()


def test_non_finite_forward_is_an_error():
    with pytest.raises(NumericError):
        T.Tensor([1.0]) * T.Tensor([np.inf])


def test_backward_needs_scalar_loss():
    x = T.parameter(np.ones(3))
    tape = T.Tape()
    with tape:
        y = x * 2.0
    with pytest.raises(DimensionError):
        tape.backward(y)


def test_no_recording_outside_a_tape():
    x = T.parameter(np.ones(3))
    tape = T.Tape()
    y = x * 2.0
    assert len(tape) == 0 and T.active_tape() is None
    with tape:
        y = y * 3.0
    assert len(tape) == 1


def test_tape_is_topological_and_deterministic(rng):
    x = rng.normal(size=(4, 4))

    def run():
        p = T.parameter(x)
        tape = T.Tape()
        with tape:
            loss = (T.tanh(p @ p) * p).sum()
        tape.backward(loss)
        ids = {id(n.output): n.index for n in tape.nodes}
        for n in tape.nodes:
            assert all(ids.get(id(i), -1) < n.index for i in n.inputs)
        return loss.data.tobytes(), p.grad.tobytes()

    assert run() == run()


def test_precision_switch():
    assert T.get_default_dtype() is np.float32
    with T.precision(np.float64):
        assert T.parameter([1.0]).dtype == np.float64
    assert T.parameter([1.0]).dtype == np.float32
    with pytest.raises(ConfigError):
        T.set_default_dtype(np.int32)


def test_gradients_accumulate_across_uses(f64):
    x = T.parameter(np.array([2.0]))
    tape = T.Tape()
    with tape:
        y = (x * x + x * 3.0).sum()
    tape.backward(y)
    assert x.grad.tolist() == [7.0]
