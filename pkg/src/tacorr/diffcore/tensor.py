"""Dense tensors with reverse-mode gradient recording.

Every op that touches a tensor with ``requires_grad`` records a node holding
its parents and a closure mapping the output gradient to parent gradients.
Nodes carry a global sequence number, so the reverse sweep can visit them in
exact reverse execution order.
"""

from __future__ import annotations

import contextlib
import itertools
import threading

import numpy as np

_seq = itertools.count()
_state = threading.local()


class NumericError(FloatingPointError):
    """Raised when an op produces NaN or Inf."""


class ShapeError(ValueError):
    """Raised on incompatible operand shapes."""


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable gradient recording inside the block (thread-local)."""
    prev = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


class DetachLog:
    """Values produced by ``detach()``, recorded once and replayed in order.

    Lets a finite-difference check hold stop-gradient operands fixed at the
    point where the analytic gradient was taken.
    """

    def __init__(self):
        self.values = []
        self.replaying = False
        self.pos = 0

    def take(self, data):
        if not self.replaying:
            self.values.append(np.array(data, copy=True))
            return data
        if self.pos >= len(self.values):
            raise RuntimeError("replay made more detach() calls than were recorded")
        out = self.values[self.pos]
        self.pos += 1
        return out


@contextlib.contextmanager
def detach_log(log, replay=False):
    prev = getattr(_state, "detach_log", None)
    log.replaying, log.pos = replay, 0
    _state.detach_log = log
    try:
        yield log
    finally:
        _state.detach_log = prev


def _check_finite(data, op):
    if not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite values produced by {op}")


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    ndim_extra = grad.ndim - len(shape)
    if ndim_extra > 0:
        grad = grad.sum(axis=tuple(range(ndim_extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """An n-d array that optionally tracks gradients.

    ``data`` is a numpy array (float64 unless constructed otherwise).
    Leaf tensors with ``requires_grad`` accumulate into ``grad`` during
    :meth:`backward`; intermediate gradients are not retained.
    """

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None, dtype=np.float64):
        arr = np.array(data, dtype=dtype, copy=True) if not isinstance(data, np.ndarray) \
            else data.astype(dtype, copy=False)
        _check_finite(arr, "tensor construction")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self._parents = ()
        self._backward = None
        self._seq = next(_seq)

    # -- construction helpers -------------------------------------------------

    @classmethod
    def _from_op(cls, data, parents, backward, op):
        _check_finite(data, op)
        out = cls.__new__(Tensor)
        out.data = data
        out.grad = None
        out.name = None
        out._seq = next(_seq)
        track = is_grad_enabled() and any(p.requires_grad for p in parents)
        out.requires_grad = track
        out._parents = tuple(parents) if track else ()
        out._backward = backward if track else None
        out._op = op
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def T(self):
        return transpose(self)

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def detach(self):
        """Same values, cut from the graph."""
        log = getattr(_state, "detach_log", None)
        return Tensor(self.data if log is None else log.take(self.data))

    def __repr__(self):
        tag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{tag})"

    def __len__(self):
        return len(self.data)

    # -- reverse sweep ----------------------------------------------------------

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``."""
        if not self.requires_grad:
            raise RuntimeError("backward() on a tensor that does not require grad")
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without grad needs a scalar output")
            grad = np.ones_like(self.data)
        Tape.from_output(self).sweep(self, np.asarray(grad, dtype=self.data.dtype))

    # -- operators ------------------------------------------------------------

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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return index(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def max(self, axis=None, keepdims=False):
        return tmax(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def sqrt(self):
        return sqrt(self)

    def relu(self):
        return relu(self)


class Parameter(Tensor):
    """A named learnable leaf tensor."""

    def __init__(self, data, name=None):
        super().__init__(data, requires_grad=True, name=name)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


class Tape:
    """Ordered record of the ops reachable from one output.

    Built on demand from the graph; ``nodes`` are sorted by decreasing
    sequence number, i.e. exact reverse execution order.
    """

    def __init__(self, nodes):
        self.nodes = nodes

    @classmethod
    def from_output(cls, out):
        seen = {id(out): out}
        stack = [out]
        while stack:
            node = stack.pop()
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    seen[id(p)] = p
                    stack.append(p)
        nodes = sorted(seen.values(), key=lambda t: t._seq, reverse=True)
        return cls(nodes)

    def __len__(self):
        return len(self.nodes)

    def sweep(self, out, grad):
        grads = {id(out): grad}
        for node in self.nodes:
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


# -- elementwise ----------------------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return Tensor._from_op(
        a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return Tensor._from_op(
        a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return Tensor._from_op(
        ad * bd, (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)), "mul")


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    with np.errstate(divide="ignore", invalid="ignore"):
        out = ad / bd

    def backward(g):
        return (_unbroadcast(g / bd, ad.shape),
                _unbroadcast(-g * out / bd, bd.shape))
    return Tensor._from_op(out, (a, b), backward, "div")


def neg(a):
    return Tensor._from_op(-a.data, (a,), lambda g: (-g,), "neg")


def power(a, p):
    if isinstance(p, Tensor):
        raise TypeError("only constant exponents are supported")
    ad = a.data
    return Tensor._from_op(ad ** p, (a,), lambda g: (g * p * ad ** (p - 1),), "pow")


def exp(a):
    out = np.exp(a.data)
    return Tensor._from_op(out, (a,), lambda g: (g * out,), "exp")


def log(a):
    ad = a.data
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(ad)
    return Tensor._from_op(out, (a,), lambda g: (g / ad,), "log")


def sqrt(a):
    with np.errstate(invalid="ignore"):
        out = np.sqrt(a.data)
    return Tensor._from_op(out, (a,), lambda g: (0.5 * g / out,), "sqrt")


def relu(a):
    mask = a.data > 0
    return Tensor._from_op(a.data * mask, (a,), lambda g: (g * mask,), "relu")


# -- linear algebra and shape -----------------------------------------------


def matmul(a, b):
    """Matrix product of two 2-d tensors."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    ad, bd = a.data, b.data
    return Tensor._from_op(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g), "matmul")


def transpose(a):
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a 2-d tensor, got {a.shape}")
    return Tensor._from_op(a.data.T, (a,), lambda g: (g.T,), "transpose")


def reshape(a, shape):
    old = a.shape
    return Tensor._from_op(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def tsum(a, axis=None, keepdims=False):
    shape = a.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)
    return Tensor._from_op(np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,),
                           backward, "sum")


def mean(a, axis=None, keepdims=False):
    count = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis, keepdims) * (1.0 / count)


def tmax(a, axis=None, keepdims=False):
    """Max reduction; the gradient goes to the first maximal entry."""
    ad = a.data
    if axis is None:
        flat = int(np.argmax(ad))

        def backward(g):
            out = np.zeros_like(ad)
            out.flat[flat] = g
            return (out,)
        return Tensor._from_op(np.asarray(ad.flat[flat]), (a,), backward, "max")
    arg = np.expand_dims(np.argmax(ad, axis=axis), axis)
    out = np.take_along_axis(ad, arg, axis=axis)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        res = np.zeros_like(ad)
        np.put_along_axis(res, arg, g, axis=axis)
        return (res,)
    return Tensor._from_op(out if keepdims else np.squeeze(out, axis), (a,), backward, "max")


def index(a, idx):
    """Basic or integer-array indexing; gradients scatter-add back."""
    ad = a.data

    def backward(g):
        res = np.zeros_like(ad)
        np.add.at(res, idx, g)
        return (res,)
    return Tensor._from_op(np.array(ad[idx]), (a,), backward, "index")


def take_along_rows(a, idx):
    """``out[i, j] = a[i, idx[i, j]]`` for a 2-d ``a``."""
    idx = np.asarray(idx)
    ad = a.data

    def backward(g):
        res = np.zeros_like(ad)
        rows = np.arange(ad.shape[0])[:, None]
        np.add.at(res, (np.broadcast_to(rows, idx.shape), idx), g)
        return (res,)
    return Tensor._from_op(np.take_along_axis(ad, idx, axis=1), (a,), backward, "take_along_rows")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))
    return Tensor._from_op(np.concatenate([t.data for t in tensors], axis=axis),
                           tuple(tensors), backward, "concat")


def stack(tensors):
    """Stack equal-shape tensors along a new leading axis."""
    return concat([as_tensor(t).reshape((1,) + as_tensor(t).shape) for t in tensors], axis=0)
