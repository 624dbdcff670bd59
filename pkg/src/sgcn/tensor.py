"""Dense tensors with tape-based reverse-mode differentiation.

Operations record a node on the innermost active :class:`Tape`.  Outside a
tape nothing is recorded, which is how inference runs.  ``Tape.backward``
walks the recorded nodes in exact reverse order.

Example::

    tape = Tape()
    with tape:
        loss = (x @ w).sum()
    tape.backward(loss)
    w.grad
"""
from contextlib import contextmanager

import numpy as np

from . import kernels
from .errors import ConfigError, DataError, DimensionError, NumericError, VocabularyError

_state = {"dtype": np.float32, "check_finite": True}
_tapes = []


def get_default_dtype():
    return _state["dtype"]


def set_default_dtype(dtype):
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise ConfigError(f"unsupported float width {dtype!r}; use float32 or float64")
    _state["dtype"] = dtype


@contextmanager
def precision(dtype):
    """Temporarily switch the global float width (float64 for gradient checks)."""
    old = _state["dtype"]
    set_default_dtype(dtype)
    try:
        yield
    finally:
        _state["dtype"] = old


def set_check_finite(flag):
    _state["check_finite"] = bool(flag)


class Node:
    __slots__ = ("op", "inputs", "output", "backward", "index")

    def __init__(self, op, inputs, output, backward, index):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward = backward
        self.index = index


class SliceGrad:
    """Gradient that is nonzero only on ``input[key]``; lets slicing skip a full zero buffer."""

    __slots__ = ("key", "value")

    def __init__(self, key, value):
        self.key = key
        self.value = value


class Tape:
    """Ordered record of differentiable operations.

    ``corrupt`` maps op names to a factor applied to the gradients those ops
    send to their inputs; it exists only so gradient checks can be shown to
    fail on a broken backward.
    """

    def __init__(self, corrupt=None):
        self.nodes = []
        self.corrupt = dict(corrupt or {})

    def __enter__(self):
        _tapes.append(self)
        return self

    def __exit__(self, *exc):
        _tapes.remove(self)
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, op, inputs, output, backward):
        node = Node(op, inputs, output, backward, len(self.nodes))
        output.node_id = node.index
        self.nodes.append(node)
        return node

    def backward(self, loss, grad=None):
        if grad is None:
            if loss.data.size != 1:
                raise DimensionError(f"backward needs a scalar loss, got shape {loss.shape}")
            grad = np.ones_like(loss.data)
        loss.grad = grad.astype(loss.data.dtype) if loss.grad is None else loss.grad + grad
        for node in reversed(self.nodes):
            out = node.output
            if out.grad is None:
                continue
            grads = node.backward(out.grad)
            scale = self.corrupt.get(node.op)
            for inp, g in zip(node.inputs, grads):
                if g is None or not inp.requires_grad:
                    continue
                if isinstance(g, SliceGrad):
                    if inp.grad is None:
                        inp.grad = np.zeros_like(inp.data)
                    inp.grad[g.key] += g.value if scale is None else g.value * scale
                    continue
                if scale is not None:
                    g = g * scale
                if inp.grad is None:
                    inp.grad = np.array(g, dtype=inp.data.dtype, copy=True)
                else:
                    inp.grad += g
            # free intermediate gradients as soon as they are consumed
            if not out.is_leaf:
                out.grad = None

    def clear(self):
        self.nodes = []


def active_tape():
    return _tapes[-1] if _tapes else None


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "node_id", "is_leaf")

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        dtype = dtype or _state["dtype"]
        arr = np.asarray(data)
        if arr.dtype != dtype:
            arr = arr.astype(dtype)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self.node_id = None
        self.is_leaf = True

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self, axis=None):
        return sum_(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _make(op, data, inputs, backward):
    if _state["check_finite"] and data.dtype.kind == "f" and not np.isfinite(data).all():
        raise NumericError(f"non-finite values produced by {op}")
    requires = any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = requires
    out.name = None
    out.node_id = None
    out.is_leaf = not requires
    tape = _tapes[-1] if _tapes else None
    if tape is not None and requires:
        tape.record(op, inputs, out, backward)
    return out


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------- pointwise


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make("add", a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make("sub", a.data - b.data, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _make("mul", a.data * b.data, (a, b), backward)


def relu(x):
    out = np.maximum(x.data, 0)

    def backward(g):
        return (g * (x.data > 0),)

    return _make("relu", out, (x,), backward)


def sigmoid(x):
    # split by sign so exp never overflows
    d = x.data
    e = np.exp(-np.abs(d))
    out = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(d.dtype)

    def backward(g):
        return (g * out * (1.0 - out),)

    return _make("sigmoid", out, (x,), backward)


def tanh(x):
    out = np.tanh(x.data)

    def backward(g):
        return (g * (1.0 - out * out),)

    return _make("tanh", out, (x,), backward)


def identity(x):
    return x


def pointwise(op, *args):
    """Dispatch by name: ``add``, ``mul``, ``relu``, ``sigmoid``, ``tanh``."""
    table = {"add": add, "mul": mul, "relu": relu, "sigmoid": sigmoid, "tanh": tanh}
    try:
        fn = table[op]
    except KeyError:
        raise ConfigError(f"unknown pointwise op {op!r}") from None
    return fn(*args)


# ---------------------------------------------------------------- linear algebra


def matmul(a, b):
    """``a @ b`` for ``a[..., m, k]`` and ``b[k, n]`` or matching batched ``b``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 1 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: inner dimensions differ for {a.shape} and {b.shape}")
    if b.ndim > 2 and b.shape[:-2] != a.shape[:-2]:
        raise DimensionError(f"matmul: batch dimensions differ for {a.shape} and {b.shape}")
    out = np.matmul(a.data, b.data)

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        if b.requires_grad:
            if b.ndim == 2:
                k, n = b.shape
                gb = a.data.reshape(-1, k).T @ g.reshape(-1, n)
            else:
                gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return ga, gb

    return _make("matmul", out, (a, b), backward)


# ---------------------------------------------------------------- shape ops


def sum_(x, axis=None):
    out = np.asarray(x.data.sum(axis=axis))

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape),)

    return _make("sum", out, (x,), backward)


def mean(x):
    return mul(sum_(x), 1.0 / x.data.size)


def reshape(x, shape):
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {x.shape} as {tuple(shape)}") from None

    def backward(g):
        return (g.reshape(x.shape),)

    return _make("reshape", out, (x,), backward)


def _is_basic(key):
    if not isinstance(key, tuple):
        key = (key,)
    return all(k is None or k is Ellipsis or isinstance(k, (slice, int, np.integer)) for k in key)


def getitem(x, key):
    """Basic (slice/int) indexing; use :func:`gather_rows` for integer-array lookups."""
    if not _is_basic(key):
        raise DimensionError("getitem supports basic slicing only; use gather_rows for index arrays")
    out = x.data[key]

    def backward(g):
        return (SliceGrad(key, g),)

    return _make("getitem", out, (x,), backward)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = ", ".join(str(t.shape) for t in tensors)
        raise DimensionError(f"concat: incompatible shapes {shapes}") from None
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _make("concat", out, tuple(tensors), backward)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.stack([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = ", ".join(str(t.shape) for t in tensors)
        raise DimensionError(f"stack: incompatible shapes {shapes}") from None

    def backward(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _make("stack", out, tuple(tensors), backward)


def gather_rows(x, index):
    """Rows of ``x`` picked by an integer array; output shape ``index.shape + x.shape[1:]``."""
    index = np.asarray(index, dtype=np.int64)
    n = x.shape[0]
    if index.size and (index.min() < 0 or index.max() >= n):
        raise DimensionError(f"gather_rows: index out of range for {n} rows")
    out = x.data[index]

    def backward(g):
        flat = g.reshape((index.size,) + x.shape[1:])
        return (kernels.scatter_add_rows(flat, index.reshape(-1), n),)

    return _make("gather_rows", out, (x,), backward)


def scatter_add_rows(x, index, n_rows):
    """Sum rows of ``x`` into ``n_rows`` output rows selected by ``index``."""
    index = np.asarray(index, dtype=np.int64)
    if index.shape != x.shape[:1]:
        raise DimensionError(f"scatter_add_rows: index shape {index.shape} vs rows {x.shape}")
    if index.size and (index.min() < 0 or index.max() >= n_rows):
        raise DimensionError(f"scatter_add_rows: index out of range for {n_rows} rows")
    out = kernels.scatter_add_rows(x.data, index, n_rows)

    def backward(g):
        return (g[index],)

    return _make("scatter_add_rows", out, (x,), backward)


# ---------------------------------------------------------------- normalizers and losses


def masked_softmax(x, mask):
    """Softmax over the last axis restricted to positions where ``mask`` is 1."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.shape:
        raise DimensionError(f"masked_softmax: mask {mask.shape} vs scores {x.shape}")
    if not mask.any(axis=-1).all():
        raise DataError("softmax over a fully masked row")
    z = np.where(mask, x.data, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.where(mask, np.exp(z), 0.0).astype(x.data.dtype)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        inner = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - inner),)

    return _make("masked_softmax", out, (x,), backward)


def softmax(x):
    return masked_softmax(x, np.ones(x.shape, dtype=bool))


def log_softmax_np(z):
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_xent(logits, target_ids, mask=None):
    """Mean negative log-likelihood over unmasked rows of ``logits[n, V]``."""
    target_ids = np.asarray(target_ids, dtype=np.int64).reshape(-1)
    n, vocab = logits.shape
    if target_ids.shape[0] != n:
        raise DimensionError(f"softmax_xent: {target_ids.shape[0]} targets for {n} rows")
    if mask is None:
        mask = np.ones(n, dtype=logits.dtype)
    mask = np.asarray(mask, dtype=logits.dtype).reshape(-1)
    live = mask > 0
    if live.any() and (target_ids[live].min() < 0 or target_ids[live].max() >= vocab):
        bad = target_ids[live][(target_ids[live] < 0) | (target_ids[live] >= vocab)][0]
        raise VocabularyError(f"target id {bad} outside vocabulary of size {vocab}")
    total = mask.sum()
    if total <= 0:
        raise DimensionError("softmax_xent: no unmasked positions")
    safe_ids = np.where(live, target_ids, 0)
    logp = log_softmax_np(logits.data)
    picked = logp[np.arange(n), safe_ids]
    loss = np.asarray(-(picked * mask).sum() / total, dtype=logits.dtype)

    def backward(g):
        p = np.exp(logp)
        p[np.arange(n), safe_ids] -= 1.0
        p *= (mask / total)[:, None]
        return (p * g,)

    return _make("softmax_xent", loss, (logits,), backward)


def dropout(x, p, training, rng):
    """Inverted dropout: survivors are scaled by ``1/(1-p)`` so eval is identity."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    keep = (rng.random(x.shape) >= p).astype(x.data.dtype) / (1.0 - p)
    return mul(x, Tensor(keep, dtype=x.data.dtype))


def parameter(data, name=None):
    return Tensor(np.array(data, dtype=_state["dtype"]), requires_grad=True, name=name)
