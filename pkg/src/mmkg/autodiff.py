"""A small reverse-mode differentiation engine over numpy arrays.

Every public operation builds a :class:`Tensor` that remembers its parents and a
closure mapping the output gradient to one gradient per parent. Calling
:meth:`Tensor.backward` on a scalar walks the graph in reverse topological order.

Storage follows the input dtype: parameters are float32 by default, and the
gradient checker promotes copies to float64.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import NumericError, ShapeError

_grad_enabled = True
# when a list, piecewise-linear ops append their active-branch masks (gradient checking)
_kink_log: list | None = None


@contextlib.contextmanager
def no_grad():
    """Disable graph recording (forward-only evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "op", "parents", "backward_fn", "name")

    def __init__(self, value, requires_grad=False, op="leaf", parents=(), backward_fn=None, name=None):
        self.value = np.asarray(value)
        if self.value.dtype.kind != "f":
            self.value = self.value.astype(np.float32)
        self.grad = None
        self.requires_grad = requires_grad
        self.op = op
        self.parents = parents
        self.backward_fn = backward_fn
        self.name = name
        if requires_grad:
            self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def dtype(self):
        return self.value.dtype

    def numpy(self):
        return self.value

    def __repr__(self):
        label = self.name or self.op
        return f"Tensor({label}, shape={self.shape}, dtype={self.dtype})"

    # operator sugar
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
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return index(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into every leaf with ``requires_grad``."""
        if grad is None:
            if self.value.size != 1:
                raise ShapeError(f"backward() without a seed needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.value)
        order = _topological(self)
        grads = {id(self): np.asarray(grad, dtype=self.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.backward_fn is None:
                if node.requires_grad:
                    node.grad += g
                continue
            for parent, pg in zip(node.parents, node.backward_fn(g)):
                if pg is None or not _needs_grad(parent):
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


def _needs_grad(t: Tensor) -> bool:
    return t.requires_grad or t.backward_fn is not None


def _topological(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x)
    if arr.dtype.kind != "f":
        arr = arr.astype(np.float32)
    return Tensor(arr, op="const")


def _result(value, op, parents, backward_fn) -> Tensor:
    parents = tuple(parents)
    if _grad_enabled and any(_needs_grad(p) for p in parents):
        return Tensor(value, op=op, parents=parents, backward_fn=backward_fn)
    return Tensor(value, op=op)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(a.value + b.value, "add", (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(a.value - b.value, "sub", (a, b),
                   lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(a.value * b.value, "mul", (a, b),
                   lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _result(-a.value, "neg", (a,), lambda g: (-g,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.value)
    return _result(out, "exp", (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.value)
    return _result(out, "log", (a,), lambda g: (g / a.value,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.value)

    def back(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(out > 0, 0.5 / np.where(out > 0, out, 1), 0.0)
        return (g * d.astype(out.dtype),)

    return _result(out, "sqrt", (a,), back)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _sigmoid(a.value)
    return _result(out, "sigmoid", (a,), lambda g: (g * out * (1 - out),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def log_sigmoid(a) -> Tensor:
    """log(sigmoid(x)) computed as -softplus(-x)."""
    a = as_tensor(a)
    x = a.value
    out = -(np.logaddexp(0, -x)).astype(x.dtype)
    return _result(out, "log_sigmoid", (a,), lambda g: (g * _sigmoid(-x),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.value > 0
    if _kink_log is not None:
        _kink_log.append(mask)
    return _result(a.value * mask, "relu", (a,), lambda g: (g * mask,))


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = as_tensor(a)
    factor = np.where(a.value > 0, 1.0, slope).astype(a.dtype)
    if _kink_log is not None:
        _kink_log.append(a.value > 0)
    return _result(a.value * factor, "leaky_relu", (a,), lambda g: (g * factor,))


def dropout(a, rate: float, rng: np.random.Generator | None, train: bool) -> Tensor:
    """Inverted dropout: surviving units are scaled by 1/(1-rate) at train time."""
    a = as_tensor(a)
    if not train or rate <= 0:
        return a
    if rng is None:
        raise ValueError("dropout in train mode needs an rng")
    keep = (rng.random(a.shape) >= rate).astype(a.dtype) / np.asarray(1.0 - rate, dtype=a.dtype)
    return _result(a.value * keep, "dropout", (a,), lambda g: (g * keep,))


# ---------------------------------------------------------------- reductions / shape

def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = a.value.sum(axis=axis, keepdims=keepdims, dtype=np.float64).astype(a.dtype)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).astype(a.dtype),)

    return _result(out, "sum", (a,), back)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    n = a.value.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    out = a.value.mean(axis=axis, keepdims=keepdims, dtype=np.float64).astype(a.dtype)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, a.shape).astype(a.dtype),)

    return _result(out, "mean", (a,), back)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _result(a.value.reshape(shape), "reshape", (a,), lambda g: (g.reshape(a.shape),))


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return _result(a.value.T, "transpose", (a,), lambda g: (g.T,))


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.value for t in ts], axis=axis)
    sizes = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def back(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _result(out, "concat", ts, back)


def index(a, idx) -> Tensor:
    """Basic or fancy indexing (gather). Backward scatters with accumulation."""
    a = as_tensor(a)
    out = a.value[idx]

    def back(g):
        full = np.zeros_like(a.value)
        np.add.at(full, idx, g)
        return (full,)

    return _result(out, "index", (a,), back)


# ---------------------------------------------------------------- products

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul shapes {a.shape} and {b.shape} do not align")
    out = a.value @ b.value

    def back(g):
        av, bv = a.value, b.value
        if bv.ndim == 1:
            ga = g[..., None] * bv
            gb = g * av if av.ndim == 1 else np.tensordot(av, g, axes=(tuple(range(av.ndim - 1)), tuple(range(g.ndim))))
        else:
            ga = g @ bv.T
            if av.ndim == 1:
                gb = np.outer(av, g)
            else:
                gb = av.reshape(-1, av.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return _result(out, "matmul", (a, b), back)


def einsum(spec: str, a, b) -> Tensor:
    """Two-operand einsum with explicit output, e.g. ``"bi,ijk->bjk"``."""
    a, b = as_tensor(a), as_tensor(b)
    ins, out_idx = spec.replace(" ", "").split("->")
    ia, ib = ins.split(",")
    for side, other in ((ia, ib), (ib, ia)):
        if len(set(side)) != len(side) or any(c not in other + out_idx for c in side):
            raise ValueError(f"unsupported einsum spec {spec!r}")
    out = np.einsum(spec, a.value, b.value)
    return _result(out, "einsum", (a, b),
                   lambda g: (np.einsum(f"{out_idx},{ib}->{ia}", g, b.value),
                              np.einsum(f"{out_idx},{ia}->{ib}", g, a.value)))


def spmm(adj: sp.spmatrix, x) -> Tensor:
    """Constant sparse matrix times a dense tensor."""
    x = as_tensor(x)
    adj = sp.csr_matrix(adj)
    adj_t = adj.T.tocsr()
    out = np.asarray(adj @ x.value, dtype=x.dtype)
    return _result(out, "spmm", (x,), lambda g: (np.asarray(adj_t @ g, dtype=x.dtype),))


# ---------------------------------------------------------------- softmax family

def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.value - a.value.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _result(out, "softmax", (a,), back)


def segment_sum(a, segments: np.ndarray, num_segments: int) -> Tensor:
    """Sum rows of ``a`` into ``num_segments`` buckets given by ``segments``."""
    a = as_tensor(a)
    segments = np.asarray(segments, dtype=np.int64)
    out = np.zeros((num_segments,) + a.shape[1:], dtype=a.dtype)
    np.add.at(out, segments, a.value)
    return _result(out, "segment_sum", (a,), lambda g: (g[segments],))


def segment_softmax(a, segments: np.ndarray, num_segments: int) -> Tensor:
    """Softmax of a 1-d score vector within each segment."""
    a = as_tensor(a)
    segments = np.asarray(segments, dtype=np.int64)
    x = a.value
    seg_max = np.full(num_segments, -np.inf, dtype=x.dtype)
    np.maximum.at(seg_max, segments, x)
    e = np.exp(x - seg_max[segments])
    denom = np.zeros(num_segments, dtype=x.dtype)
    np.add.at(denom, segments, e)
    out = e / denom[segments]

    def back(g):
        dot = np.zeros(num_segments, dtype=x.dtype)
        np.add.at(dot, segments, g * out)
        return (out * (g - dot[segments]),)

    return _result(out, "segment_softmax", (a,), back)


# ---------------------------------------------------------------- parameters

class ParameterSet:
    """Named trainable tensors, each with a gradient accumulator."""

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise KeyError(f"parameter {name!r} already exists")
        t = Tensor(np.array(value, dtype=self.dtype), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self) -> list[str]:
        return list(self._params)

    def zero_grad(self):
        for t in self._params.values():
            t.grad = np.zeros_like(t.value)

    def state(self) -> dict[str, np.ndarray]:
        """Copy of every parameter value."""
        return {k: t.value.copy() for k, t in self._params.items()}

    def load_state(self, state: dict[str, np.ndarray]):
        if set(state) != set(self._params):
            missing = set(self._params) ^ set(state)
            raise KeyError(f"parameter names differ: {sorted(missing)}")
        for k, v in state.items():
            t = self._params[k]
            if v.shape != t.shape:
                raise ShapeError(f"{k}: expected shape {t.shape}, got {v.shape}")
            t.value = np.array(v, dtype=self.dtype)
            t.grad = np.zeros_like(t.value)

    def astype(self, dtype) -> "ParameterSet":
        out = ParameterSet(dtype)
        for k, t in self._params.items():
            out.add(k, t.value)
        return out

    def num_values(self) -> int:
        return int(sum(t.value.size for t in self._params.values()))


def _offending_op(root: Tensor) -> str:
    for node in _topological(root):
        if not np.all(np.isfinite(node.value)) and all(np.all(np.isfinite(p.value)) for p in node.parents):
            return node.name or node.op
    return root.op


def forward_backward(loss_fn: Callable[[ParameterSet], Tensor], params: ParameterSet) -> float:
    """Evaluate ``loss_fn(params)`` and fill every parameter's ``grad``."""
    params.zero_grad()
    loss = loss_fn(params)
    if loss.value.size != 1:
        raise ShapeError(f"loss must be a scalar, got shape {loss.shape}")
    if not np.isfinite(loss.value).all():
        raise NumericError(f"non-finite loss produced by primitive {_offending_op(loss)!r}")
    loss.backward()
    return float(loss.value)


def _branches(loss_fn, params) -> tuple[float, list]:
    global _kink_log
    _kink_log = []
    try:
        value = float(loss_fn(params).value)
        return value, _kink_log
    finally:
        _kink_log = None


def _same_branches(a: list, b: list) -> bool:
    return len(a) == len(b) and all(x.shape == y.shape and np.array_equal(x, y) for x, y in zip(a, b))


def finite_diff_check(loss_fn: Callable[[ParameterSet], Tensor], params: ParameterSet,
                      eps: float = 1e-3, names: Iterable[str] | None = None, max_halvings: int = 20) -> float:
    """Max relative error between analytic and central-difference gradients.

    Runs on a float64 copy of ``params``; ``loss_fn`` must be deterministic.
    A probe that flips any ReLU/LeakyReLU branch relative to the base point
    would straddle a kink, so the step for that coordinate is halved until both
    probes stay on the base point's linear piece. Discrepancy below the
    roundoff floor of the difference quotient is not counted.
    """
    p64 = params.astype(np.float64)
    forward_backward(loss_fn, p64)
    worst = 0.0
    with no_grad():
        _, base = _branches(loss_fn, p64)
        for name in (names or p64.names()):
            t = p64[name]
            analytic = t.grad.ravel()
            flat = t.value.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                h = eps
                for _ in range(max_halvings + 1):
                    flat[i] = orig + h
                    f_plus, br_plus = _branches(loss_fn, p64)
                    flat[i] = orig - h
                    f_minus, br_minus = _branches(loss_fn, p64)
                    if _same_branches(base, br_plus) and _same_branches(base, br_minus):
                        break
                    h /= 2
                flat[i] = orig
                numeric = (f_plus - f_minus) / (2 * h)
                # a few ulps of the loss, divided by the step, is all the difference can resolve
                noise = 4 * (np.spacing(abs(f_plus)) + np.spacing(abs(f_minus))) / (2 * h)
                err = max(0.0, abs(analytic[i] - numeric) - noise) / max(1e-8, abs(analytic[i]) + abs(numeric))
                worst = max(worst, err)
    return worst
