"""Dense tensor engine with reverse-mode gradient propagation.

Tensors wrap contiguous float32 arrays (float64 is used for gradient
checking). Results of tracked operations keep references to their parents
plus a gradient closure; backward() walks that DAG once in reverse
topological order. Broadcasting is deliberately restricted: the second
operand of an elementwise op may have singleton extents on any axis except
the leading (batch) one, and its gradient is sum-reduced over those axes.
Every op output is checked for finiteness; NaN/Inf raises
NumericDomainError.
"""

import math

import numpy as np

from ..errors import ContractError, DimensionError, NumericDomainError

_ALLOWED_DTYPES = (np.float32, np.float64)


def _ensure_finite(arr, op):
    # one float64 reduction: any NaN/Inf element forces a non-finite sum
    if not math.isfinite(float(arr.sum(dtype=np.float64))):
        raise NumericDomainError(f"non-finite values produced by '{op}'")


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_grad_fn", "_op",
                 "_backward_done")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in _ALLOWED_DTYPES:
            arr = arr.astype(np.float32)
        # ascontiguousarray would promote 0-d scalars to 1-d
        self.data = arr if arr.ndim == 0 else np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._grad_fn = None
        self._op = "leaf"
        self._backward_done = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}, op={self._op})"

    def backward(self):
        backward(self)

    def item(self):
        return float(self.data)

    # operator sugar used throughout the network and losses
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)


def _result(data, parents, grad_fn, op):
    _ensure_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._op = op
    out._backward_done = False
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._grad_fn = grad_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._grad_fn = None
    return out


def _check_same_dtype(op, *tensors):
    dt = tensors[0].data.dtype
    for t in tensors[1:]:
        if t.data.dtype != dt:
            raise ContractError(f"'{op}' got mixed dtypes {dt} and {t.data.dtype}")
    return dt


def _broadcast_check(op, a, b):
    sa, sb = a.data.shape, b.data.shape
    if sa == sb:
        return
    if len(sa) != len(sb):
        raise DimensionError(f"'{op}' rank mismatch {sa} vs {sb}")
    for i, (x, y) in enumerate(zip(sa, sb)):
        if y == x:
            continue
        if y == 1 and i > 0:
            continue
        raise DimensionError(f"'{op}' shapes {sa} and {sb} not broadcastable")


def _reduce_to(g, shape):
    """Sum-reduce gradient g over the axes where `shape` holds singletons."""
    axes = tuple(i for i in range(len(shape)) if shape[i] == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return np.ascontiguousarray(g)


def add(a, b):
    _check_same_dtype("add", a, b)
    _broadcast_check("add", a, b)
    out = a.data + b.data

    def grad_fn(g):
        return g, _reduce_to(g, b.data.shape)

    return _result(out, (a, b), grad_fn, "add")


def sub(a, b):
    _check_same_dtype("sub", a, b)
    _broadcast_check("sub", a, b)
    out = a.data - b.data

    def grad_fn(g):
        return g, _reduce_to(-g, b.data.shape)

    return _result(out, (a, b), grad_fn, "sub")


def mul(a, b):
    _check_same_dtype("mul", a, b)
    _broadcast_check("mul", a, b)
    out = a.data * b.data
    ad, bd = a.data, b.data

    def grad_fn(g):
        return g * bd, _reduce_to(g * ad, bd.shape)

    return _result(out, (a, b), grad_fn, "mul")


def div(a, b):
    _check_same_dtype("div", a, b)
    _broadcast_check("div", a, b)
    out = a.data / b.data
    bd = b.data
    od = out

    def grad_fn(g):
        return g / bd, _reduce_to(-g * od / bd, bd.shape)

    return _result(out, (a, b), grad_fn, "div")


def elementwise(kind, a, b):
    """Dispatch form of the binary pointwise ops."""
    try:
        fn = {"add": add, "sub": sub, "mul": mul}[kind]
    except KeyError:
        raise ContractError(f"unknown elementwise kind '{kind}'") from None
    return fn(a, b)


def scale(x, c):
    c = float(c)
    out = x.data * np.array(c, dtype=x.data.dtype)

    def grad_fn(g):
        return (g * np.array(c, dtype=g.dtype),)

    return _result(out, (x,), grad_fn, "scale")


def add_scalar(x, c):
    out = x.data + np.array(float(c), dtype=x.data.dtype)

    def grad_fn(g):
        return (g,)

    return _result(out, (x,), grad_fn, "add_scalar")


def neg(x):
    return scale(x, -1.0)


def absolute(x):
    out = np.abs(x.data)
    sign = np.sign(x.data)

    def grad_fn(g):
        return (g * sign,)

    return _result(out, (x,), grad_fn, "abs")


def relu(x):
    out = np.maximum(x.data, 0)
    mask = (x.data > 0).astype(x.data.dtype)

    def grad_fn(g):
        return (g * mask,)

    return _result(out, (x,), grad_fn, "relu")


def leaky_relu(x, slope=0.1):
    xd = x.data
    out = np.where(xd > 0, xd, xd * np.array(slope, dtype=xd.dtype))
    factor = np.where(xd > 0, np.array(1, dtype=xd.dtype), np.array(slope, dtype=xd.dtype))

    def grad_fn(g):
        return (g * factor,)

    return _result(out, (x,), grad_fn, "leaky_relu")


def sigmoid(x):
    xd = x.data
    out = np.empty_like(xd)
    pos = xd >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    ex = np.exp(xd[~pos])
    out[~pos] = ex / (1.0 + ex)

    def grad_fn(g):
        return (g * out * (1.0 - out),)

    return _result(out, (x,), grad_fn, "sigmoid")


def activation(kind, x):
    """Dispatch form of the pointwise nonlinearities."""
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "leaky_relu":
        return leaky_relu(x)
    raise ContractError(f"unknown activation kind '{kind}'")


def global_avg_pool(x):
    if x.data.ndim != 4:
        raise DimensionError("global_avg_pool expects NCHW input")
    n, c, h, w = x.data.shape
    out = x.data.mean(axis=(2, 3), keepdims=True)
    inv = 1.0 / (h * w)

    def grad_fn(g):
        gx = np.broadcast_to(g * np.array(inv, dtype=g.dtype), (n, c, h, w))
        return (np.ascontiguousarray(gx),)

    return _result(out, (x,), grad_fn, "global_avg_pool")


def dense(x, w, b=None):
    if x.data.ndim != 2 or w.data.ndim != 2:
        raise DimensionError("dense expects x (N,C) and w (K,C)")
    if x.data.shape[1] != w.data.shape[1]:
        raise DimensionError(
            f"dense inner dims disagree: x {x.data.shape} vs w {w.data.shape}")
    parents = [x, w]
    _check_same_dtype("dense", x, w)
    out = x.data @ w.data.T
    if b is not None:
        if b.data.shape != (w.data.shape[0],):
            raise DimensionError("dense bias must be shaped (K,)")
        out = out + b.data
        parents.append(b)
    xd, wd = x.data, w.data

    def grad_fn(g):
        grads = [g @ wd, g.T @ xd]
        if b is not None:
            grads.append(g.sum(axis=0))
        return tuple(grads)

    return _result(np.ascontiguousarray(out), parents, grad_fn, "dense")


def concat_channels(parts):
    if not parts:
        raise DimensionError("concat_channels needs at least one part")
    _check_same_dtype("concat_channels", *parts)
    ref = parts[0].data.shape
    for p in parts:
        s = p.data.shape
        if len(s) != 4 or s[0] != ref[0] or s[2:] != ref[2:]:
            raise DimensionError(
                f"concat_channels parts must share N,H,W: {ref} vs {s}")
    out = np.concatenate([p.data for p in parts], axis=1)
    sizes = [p.data.shape[1] for p in parts]

    def grad_fn(g):
        grads = []
        start = 0
        for c in sizes:
            grads.append(np.ascontiguousarray(g[:, start:start + c]))
            start += c
        return tuple(grads)

    return _result(out, tuple(parts), grad_fn, "concat_channels")


def slice_channels(x, start, stop):
    if x.data.ndim != 4:
        raise DimensionError("slice_channels expects NCHW input")
    if not (0 <= start < stop <= x.data.shape[1]):
        raise DimensionError(
            f"channel slice [{start}:{stop}] out of range for {x.data.shape}")
    out = np.ascontiguousarray(x.data[:, start:stop])
    full = x.data.shape

    def grad_fn(g):
        gx = np.zeros(full, dtype=g.dtype)
        gx[:, start:stop] = g
        return (gx,)

    return _result(out, (x,), grad_fn, "slice_channels")


def reshape(x, shape):
    out = np.ascontiguousarray(x.data).reshape(shape)
    orig = x.data.shape

    def grad_fn(g):
        return (np.ascontiguousarray(g).reshape(orig),)

    return _result(np.ascontiguousarray(out), (x,), grad_fn, "reshape")


def cast(x, dtype):
    dt = np.dtype(dtype)
    if dt not in _ALLOWED_DTYPES:
        raise ContractError(f"cast target must be float32/float64, got {dt}")
    src = x.data.dtype
    out = x.data.astype(dt)

    def grad_fn(g):
        return (g.astype(src),)

    return _result(out, (x,), grad_fn, "cast")


def sum_all(x):
    out = np.asarray(x.data.sum(), dtype=x.data.dtype)
    shape = x.data.shape

    def grad_fn(g):
        return (np.full(shape, g, dtype=g.dtype),)

    return _result(out, (x,), grad_fn, "sum")


def mean_all(x):
    out = np.asarray(x.data.mean(), dtype=x.data.dtype)
    shape = x.data.shape
    inv = 1.0 / x.data.size

    def grad_fn(g):
        return (np.full(shape, g * inv, dtype=g.dtype),)

    return _result(out, (x,), grad_fn, "mean")


def backward(loss):
    """Populate .grad on every reachable requires_grad tensor.

    The seed must be a scalar produced through tracked ops; running backward
    twice on the same graph requires an explicit reset and is rejected.
    """
    if loss.data.ndim != 0:
        raise ContractError("backward seed must be a scalar tensor")
    if loss._backward_done:
        raise ContractError("backward already invoked on this graph")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any requires_grad tensor")

    topo = []
    state = {}  # id -> 0 visiting, 1 done
    stack = [loss]
    while stack:
        node = stack[-1]
        nid = id(node)
        if state.get(nid) == 1:
            stack.pop()
            continue
        if nid in state:
            state[nid] = 1
            topo.append(node)
            stack.pop()
            continue
        state[nid] = 0
        for p in node._parents:
            if p.requires_grad and state.get(id(p)) != 1:
                stack.append(p)

    loss.grad = np.ones((), dtype=loss.data.dtype)
    for node in reversed(topo):
        if node._grad_fn is None or node.grad is None:
            continue
        grads = node._grad_fn(node.grad)
        for parent, g in zip(node._parents, grads):
            if not parent.requires_grad or g is None:
                continue
            if parent.grad is None:
                parent.grad = np.ascontiguousarray(g)
            else:
                parent.grad = parent.grad + g
    loss._backward_done = True


def zero_grads(tensors):
    for t in tensors:
        t.grad = None
