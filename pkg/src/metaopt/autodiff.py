"""Array-level reverse-mode differentiation.

A :class:`Tape` records every operation that touches one of its parameter
tensors, in execution order, so the node list is topologically sorted by
construction.  :func:`grad` sweeps it once in reverse.

Every op in this module also accepts plain arrays; when none of the operands
is a :class:`Tensor` the op simply returns the numpy result.  Loss code can
therefore be written once and evaluated with or without a tape.

Complex quantities never enter the tape: they are carried as separate real
and imaginary tensors (see :mod:`metaopt.linalg`).
"""
import warnings

import numpy as np

from .errors import DisconnectedParameter, NonFiniteGradient, NonFiniteLoss


class Tape:
    def __init__(self):
        self.nodes = []

    def param(self, value, copy=True):
        """Register a real array as a differentiable parameter slot."""
        return Tensor(np.array(value, dtype=np.float64, copy=copy or None), self)

    def __len__(self):
        return len(self.nodes)


class Tensor:
    # Makes ``ndarray <op> Tensor`` defer to the Tensor's reflected operator.
    __array_ufunc__ = None

    __slots__ = ("value", "tape", "index", "links")

    def __init__(self, value, tape, links=()):
        self.value = value
        self.tape = tape
        self.links = links  # ((parent, vjp), ...)
        self.index = len(tape.nodes)
        tape.nodes.append(self)

    shape = property(lambda self: self.value.shape)
    ndim = property(lambda self: self.value.ndim)
    size = property(lambda self: self.value.size)
    T = property(lambda self: transpose(self))

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, node={self.index})"

    def __float__(self):
        return float(self.value)

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
        return mul(self, -1.0)

    def __pow__(self, exponent):
        if exponent == 2:
            return square(self)
        raise NotImplementedError("only squaring is supported")

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None):
        return mean(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return reshape(self, shape)


def value(x):
    return x.value if isinstance(x, Tensor) else x


def _record(result, *links):
    """Wrap ``result`` as a tape node if any link parent is a Tensor."""
    links = tuple((p, f) for p, f in links if isinstance(p, Tensor))
    if not links:
        return result
    tape = links[0][0].tape
    for p, _ in links[1:]:
        if p.tape is not tape:
            raise ValueError("operands recorded on different tapes")
    return Tensor(np.asarray(result, dtype=np.float64), tape, links)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _shape(x):
    return np.shape(value(x))


# -- elementwise arithmetic -------------------------------------------------

def add(a, b):
    sa, sb = _shape(a), _shape(b)
    return _record(value(a) + value(b),
                   (a, lambda g: _unbroadcast(g, sa)),
                   (b, lambda g: _unbroadcast(g, sb)))


def sub(a, b):
    sa, sb = _shape(a), _shape(b)
    return _record(value(a) - value(b),
                   (a, lambda g: _unbroadcast(g, sa)),
                   (b, lambda g: -_unbroadcast(g, sb)))


def mul(a, b):
    va, vb = value(a), value(b)
    return _record(va * vb,
                   (a, lambda g: _unbroadcast(g * vb, np.shape(va))),
                   (b, lambda g: _unbroadcast(g * va, np.shape(vb))))


def div(a, b):
    va, vb = value(a), value(b)
    out = va / vb
    return _record(out,
                   (a, lambda g: _unbroadcast(g / vb, np.shape(va))),
                   (b, lambda g: _unbroadcast(-g * out / vb, np.shape(vb))))


def square(a):
    va = value(a)
    return _record(va * va, (a, lambda g: 2.0 * g * va))


def sqrt(a):
    out = np.sqrt(value(a))
    return _record(out, (a, lambda g: 0.5 * g / out))


def log(a):
    va = value(a)
    return _record(np.log(va), (a, lambda g: g / va))


def exp(a):
    out = np.exp(value(a))
    return _record(out, (a, lambda g: g * out))


def tanh(a):
    out = np.tanh(value(a))
    return _record(out, (a, lambda g: g * (1.0 - out * out)))


def sigmoid(a):
    va = value(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * va))
    return _record(out, (a, lambda g: g * out * (1.0 - out)))


def sin(a):
    va = value(a)
    return _record(np.sin(va), (a, lambda g: g * np.cos(va)))


def cos(a):
    va = value(a)
    return _record(np.cos(va), (a, lambda g: -g * np.sin(va)))


# -- linear algebra and reductions ------------------------------------------

def matmul(a, b):
    va, vb = value(a), value(b)
    out = va @ vb

    def grad_a(g):
        if vb.ndim == 1:
            ga = np.multiply.outer(g, vb) if va.ndim > 1 else g * vb
        elif va.ndim == 1:
            ga = (vb @ g[..., None])[..., 0]
        else:
            ga = g @ np.swapaxes(vb, -1, -2)
        return _unbroadcast(ga, va.shape)

    def grad_b(g):
        if va.ndim == 1:
            gb = np.multiply.outer(va, g) if vb.ndim > 1 else g * va
        elif vb.ndim == 1:
            gb = (np.swapaxes(va, -1, -2) @ g[..., None])[..., 0]
        else:
            gb = np.swapaxes(va, -1, -2) @ g
        return _unbroadcast(gb, vb.shape)

    return _record(out, (a, grad_a), (b, grad_b))


def sum_(a, axis=None, keepdims=False):
    va = value(a)
    shape = np.shape(va)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, shape).copy()

    return _record(np.sum(va, axis=axis, keepdims=keepdims), (a, vjp))


def mean(a, axis=None):
    va = value(a)
    n = np.size(va) if axis is None else np.shape(va)[axis]
    return div(sum_(a, axis), float(n))


def min_(a, axis=None):
    """Minimum; the gradient goes only to the first arg-min entry."""
    va = np.asarray(value(a))
    if axis is None:
        flat = int(np.argmin(va))

        def vjp(g):
            out = np.zeros(va.size)
            out[flat] = g
            return out.reshape(va.shape)

        return _record(va.reshape(-1)[flat], (a, vjp))
    idx = np.expand_dims(np.argmin(va, axis=axis), axis)
    out = np.take_along_axis(va, idx, axis).squeeze(axis)

    def vjp(g):
        z = np.zeros(va.shape)
        np.put_along_axis(z, idx, np.expand_dims(g, axis), axis)
        return z

    return _record(out, (a, vjp))


def reshape(a, shape):
    va = value(a)
    return _record(np.reshape(va, shape), (a, lambda g: g.reshape(np.shape(va))))


def transpose(a, axes=None):
    va = value(a)
    inv = None if axes is None else np.argsort(axes)
    return _record(np.transpose(va, axes), (a, lambda g: np.transpose(g, inv)))


def getitem(a, idx):
    va = value(a)

    def vjp(g):
        z = np.zeros(np.shape(va))
        np.add.at(z, idx, g)
        return z

    return _record(va[idx], (a, vjp))


def concat(parts, axis=0):
    vals = [np.atleast_1d(value(p)) for p in parts]
    bounds = np.cumsum([v.shape[axis] for v in vals])[:-1]

    def piece(i):
        return lambda g: np.split(g, bounds, axis=axis)[i]

    return _record(np.concatenate(vals, axis=axis),
                   *[(p, piece(i)) for i, p in enumerate(parts)])


def stack(parts, axis=0):
    return concat([reshape(p, np.shape(value(p))[:axis] + (1,) + np.shape(value(p))[axis:])
                   for p in parts], axis=axis)


# -- differentiation --------------------------------------------------------

def grad(loss, params):
    """Reverse-mode gradients of the scalar ``loss`` w.r.t. each parameter.

    Parameters without a path to ``loss`` get a zero gradient and a
    :class:`DisconnectedParameter` warning.
    """
    if not isinstance(loss, Tensor):
        raise TypeError("loss was not recorded on a tape")
    if loss.size != 1:
        raise ValueError(f"loss must be a scalar, got shape {loss.shape}")
    nodes = loss.tape.nodes
    wanted = {p.index for p in params}
    acc = {loss.index: np.ones(loss.shape)}
    for node in reversed(nodes[: loss.index + 1]):
        g = acc.get(node.index)
        if g is None:
            continue
        if node.index not in wanted:
            del acc[node.index]
        for parent, vjp in node.links:
            contrib = vjp(g)
            prev = acc.get(parent.index)
            acc[parent.index] = contrib if prev is None else prev + contrib
    out = []
    for p in params:
        g = acc.get(p.index)
        if g is None:
            warnings.warn(f"parameter node {p.index} does not reach the loss",
                          DisconnectedParameter, stacklevel=2)
            g = np.zeros(p.shape)
        elif not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient for parameter node {p.index}")
        out.append(g)
    return out


def value_and_grad(fn, x):
    """Evaluate ``fn`` at the real array ``x`` and return (loss, gradient)."""
    tape = Tape()
    xt = tape.param(x)
    loss = fn(xt)
    if not isinstance(loss, Tensor):
        return float(loss), np.zeros(np.shape(x))
    return float(loss.value), grad(loss, [xt])[0]


def finite_diff_grad(loss_fn, x, step=1e-5):
    """Central-difference gradient of a scalar function of a real array."""
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.array(x, dtype=np.float64)
    flat = x.reshape(-1)
    out = np.empty(flat.size)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = float(value(loss_fn(x)))
        flat[i] = orig - step
        fm = float(value(loss_fn(x)))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteLoss(f"loss not finite around coordinate {i}")
        out[i] = (fp - fm) / (2.0 * step)
    return out.reshape(x.shape)
