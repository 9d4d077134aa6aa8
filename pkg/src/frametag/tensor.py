"""A small reverse-mode autodiff tape over numpy arrays.

Values live in plain float ndarrays. Every differentiable operation
records its parent tensors together with one vector-Jacobian closure per
parent; ``Tensor.backward`` replays the tape in reverse topological
order and accumulates gradients on the leaves. There is no graph
compilation and no laziness -- an op runs its numpy forward immediately.

Gradients are only tracked while ``grad_enabled()`` is true (the
default); wrap inference loops in ``no_grad()`` to skip tape building.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable tape recording inside the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """n-dimensional float array plus an optional gradient slot.

    ``data`` is the row-major numpy array holding the values; ``grad``
    is filled by ``backward`` for tensors with ``requires_grad``.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind not in "fiu":
            raise TypeError(f"tensor data must be numeric, got {arr.dtype}")
        if arr.dtype.kind in "iu":
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()  # tuple of (Tensor, vjp) pairs

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
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    def __len__(self):
        return len(self.data)

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        """Same values, cut off from the tape: nothing upstream of the
        result ever receives gradient through it."""
        return Tensor(self.data, requires_grad=False)

    def grad_array(self) -> np.ndarray:
        """Gradient as an array, zeros when backward never reached it."""
        if self.grad is None:
            return np.zeros_like(self.data)
        return self.grad

    # -- tape ------------------------------------------------------------

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() on a non-scalar tensor needs an explicit grad")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.data.dtype)

        order = _toposort(self)
        grads: dict[int, np.ndarray] = {id(self): grad}
        for node in order:  # already reverse-topological
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad and not node._parents:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, vjp in node._parents:
                if not parent.requires_grad:
                    continue
                contrib = vjp(g)
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + contrib
                else:
                    grads[key] = contrib

    # -- arithmetic ------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        return mul(self, power(other, -1.0))

    def __rtruediv__(self, other):
        return mul(power(self, -1.0), other)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes if axes else None)

    @property
    def T(self):
        return transpose(self, None)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _toposort(root: Tensor) -> list[Tensor]:
    """Reverse-topological node order, iterative (graphs can be thousands
    of nodes deep for long sequences)."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node._parents:
            if id(parent) not in seen and parent.requires_grad:
                stack.append((parent, False))
    order.reverse()
    return order


def _node(data: np.ndarray, parents) -> Tensor:
    """Build an op result; parents is a sequence of (Tensor, vjp)."""
    if not _GRAD_ENABLED:
        return Tensor(data)
    live = tuple((p, vjp) for p, vjp in parents if p.requires_grad)
    out = Tensor(data, requires_grad=bool(live))
    out._parents = live
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient back down to the shape it was broadcast from."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# -- primitive ops --------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(
        a.data + b.data,
        [(a, lambda g: _unbroadcast(g, a.data.shape)),
         (b, lambda g: _unbroadcast(g, b.data.shape))],
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(
        a.data * b.data,
        [(a, lambda g: _unbroadcast(g * b.data, a.data.shape)),
         (b, lambda g: _unbroadcast(g * a.data, b.data.shape))],
    )


def power(a, p) -> Tensor:
    a = as_tensor(a)
    if isinstance(p, Tensor):
        raise TypeError("power exponent must be a plain number")
    p = float(p)
    out = a.data ** p
    return _node(out, [(a, lambda g: g * p * a.data ** (p - 1.0))])


def matmul(a, b) -> Tensor:
    """np.matmul with reverse rules covering 1D, 2D and leading-batch cases."""
    a, b = as_tensor(a), as_tensor(b)
    # Promote 1D operands the way np.matmul does (row for a, column for b),
    # run the 2D rules, and squeeze the promoted axes back out.
    a2 = a.data[None, :] if a.data.ndim == 1 else a.data
    b2 = b.data[:, None] if b.data.ndim == 1 else b.data
    out = np.matmul(a2, b2)
    if a.data.ndim == 1 and b.data.ndim == 1:
        out = np.asarray(out[0, 0])
    elif a.data.ndim == 1:
        out = out[..., 0, :]
    elif b.data.ndim == 1:
        out = out[..., 0]

    def promote_g(g):
        if b.data.ndim == 1:
            g = g[..., None]
        if a.data.ndim == 1:
            g = g[..., None, :]
        return g

    def grad_a(g):
        ga = np.matmul(promote_g(g), np.swapaxes(b2, -1, -2))
        return _unbroadcast(ga, a2.shape).reshape(a.data.shape)

    def grad_b(g):
        gb = np.matmul(np.swapaxes(a2, -1, -2), promote_g(g))
        return _unbroadcast(gb, b2.shape).reshape(b.data.shape)

    return _node(out, [(a, grad_a), (b, grad_b)])


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, a.data.shape).copy()
        if not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, a.data.shape).copy()

    return _node(out, [(a, vjp)])


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.data.shape[ax] for ax in axes]))
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _node(a.data.reshape(shape), [(a, lambda g: g.reshape(a.data.shape))])


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    out = np.transpose(a.data, axes)
    if axes is None:
        vjp = lambda g: np.transpose(g)
    else:
        inverse = np.argsort(axes)
        vjp = lambda g: np.transpose(g, inverse)
    return _node(out, [(a, vjp)])


def take(a, idx) -> Tensor:
    """Indexing/gather; the reverse pass scatter-adds into the source."""
    a = as_tensor(a)
    out = a.data[idx]

    def vjp(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return full

    return _node(out, [(a, vjp)])


def concatenate(parts, axis=0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def make_vjp(i):
        sl = [slice(None)] * out.ndim
        sl[axis] = slice(int(offsets[i]), int(offsets[i + 1]))
        sl = tuple(sl)
        return lambda g: g[sl]

    return _node(out, [(p, make_vjp(i)) for i, p in enumerate(parts)])


def stack(parts, axis=0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    out = np.stack([p.data for p in parts], axis=axis)

    def make_vjp(i):
        return lambda g: np.take(g, i, axis=axis)

    return _node(out, [(p, make_vjp(i)) for i, p in enumerate(parts)])


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _node(out, [(a, lambda g: g * out)])


def log(a) -> Tensor:
    a = as_tensor(a)
    return _node(np.log(a.data), [(a, lambda g: g / a.data)])


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _node(out, [(a, lambda g: g / (2.0 * out))])


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _node(out, [(a, lambda g: g * (1.0 - out * out))])


def relu(a) -> Tensor:
    a = as_tensor(a)
    out = np.maximum(a.data, 0.0)
    return _node(out, [(a, lambda g: g * (a.data > 0))])


def stop_gradient(a) -> Tensor:
    """Forward pass passes values through; the reverse pass never crosses
    this point, so everything upstream gets exactly zero gradient."""
    return as_tensor(a).detach()
