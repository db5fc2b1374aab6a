"""Reverse-mode automatic differentiation over dense numpy arrays.

A Tensor records the operation that produced it (parents plus a local
gradient closure); ``backward`` on a scalar loss runs one reverse
topological sweep and accumulates gradients into every tensor that
requires them. Shapes follow numpy broadcasting, including a leading
batch dimension, so a whole minibatch is one tape.

The tape is deterministic: node ids increase monotonically and the
sweep order depends only on graph structure, never on hashing or
threads. A tape is single-threaded; independent model instances own
independent tapes.
"""

import itertools

import numpy as np

from ..errors import ShapeError, TapeError

_node_counter = itertools.count()


class Tensor:
    """Value plus gradient container tracked on the computation tape."""

    __slots__ = ("values", "grad", "requires_grad", "node_id", "_parents", "_backward")

    def __init__(self, values, requires_grad=False, _parents=(), _backward=None):
        self.values = np.asarray(values, dtype=float)
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in _parents)
        # Leaf parameters carry an always-valid gradient buffer; interior
        # nodes allocate theirs during the backward sweep.
        self.grad = np.zeros_like(self.values) if (requires_grad and not _parents) else None
        self.node_id = next(_node_counter)
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.values.shape

    def detach(self) -> "Tensor":
        return Tensor(self.values)

    def backward(self, free_graph: bool = True) -> None:
        backward(self, free_graph=free_graph)

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, requires_grad={self.requires_grad}, node={self.node_id})"

    # Operator sugar; every operation lives in a module-level function.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)


def as_tensor(x) -> Tensor:
    """Wrap a numpy array or scalar as an untracked constant tensor."""
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _accumulate(tensor: Tensor, grad: np.ndarray) -> None:
    grad = _unbroadcast(grad, tensor.values.shape)
    if tensor.grad is None:
        # Copy unconditionally: ops may hand the same buffer to several
        # parents (x + x) and accumulation must never alias across nodes.
        tensor.grad = np.array(grad, dtype=float)
    else:
        tensor.grad += grad


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.values + b.values, _parents=(a, b))

    def grad_fn(g):
        if a.requires_grad:
            _accumulate(a, g)
        if b.requires_grad:
            _accumulate(b, g)

    out._backward = grad_fn
    return out


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.values - b.values, _parents=(a, b))

    def grad_fn(g):
        if a.requires_grad:
            _accumulate(a, g)
        if b.requires_grad:
            _accumulate(b, -g)

    out._backward = grad_fn
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.values * b.values, _parents=(a, b))

    def grad_fn(g):
        if a.requires_grad:
            _accumulate(a, g * b.values)
        if b.requires_grad:
            _accumulate(b, g * a.values)

    out._backward = grad_fn
    return out


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.values / b.values, _parents=(a, b))

    def grad_fn(g):
        if a.requires_grad:
            _accumulate(a, g / b.values)
        if b.requires_grad:
            _accumulate(b, -g * a.values / (b.values ** 2))

    out._backward = grad_fn
    return out


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.values.ndim < 2 or b.values.ndim < 2:
        raise ShapeError("matmul operands must be at least 2-D")
    if a.values.shape[-1] != b.values.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {a.values.shape} @ {b.values.shape}")
    out = Tensor(a.values @ b.values, _parents=(a, b))

    def grad_fn(g):
        if a.requires_grad:
            _accumulate(a, g @ np.swapaxes(b.values, -1, -2))
        if b.requires_grad:
            _accumulate(b, np.swapaxes(a.values, -1, -2) @ g)

    out._backward = grad_fn
    return out


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.values ** exponent, _parents=(a,))

    def grad_fn(g):
        if a.requires_grad:
            _accumulate(a, g * exponent * a.values ** (exponent - 1.0))

    out._backward = grad_fn
    return out


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.exp(a.values), _parents=(a,))

    def grad_fn(g):
        if a.requires_grad:
            _accumulate(a, g * out.values)

    out._backward = grad_fn
    return out


def log(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.log(a.values), _parents=(a,))

    def grad_fn(g):
        if a.requires_grad:
            _accumulate(a, g / a.values)

    out._backward = grad_fn
    return out


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.tanh(a.values), _parents=(a,))

    def grad_fn(g):
        if a.requires_grad:
            _accumulate(a, g * (1.0 - out.values ** 2))

    out._backward = grad_fn
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(1.0 / (1.0 + np.exp(-a.values)), _parents=(a,))

    def grad_fn(g):
        if a.requires_grad:
            _accumulate(a, g * out.values * (1.0 - out.values))

    out._backward = grad_fn
    return out


def relu(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.maximum(a.values, 0.0), _parents=(a,))

    def grad_fn(g):
        if a.requires_grad:
            _accumulate(a, g * (a.values > 0.0))

    out._backward = grad_fn
    return out


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.where(a.values > 0.0, a.values, slope * a.values), _parents=(a,))

    def grad_fn(g):
        if a.requires_grad:
            _accumulate(a, g * np.where(a.values > 0.0, 1.0, slope))

    out._backward = grad_fn
    return out


def tensor_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.values.sum(axis=axis, keepdims=keepdims), _parents=(a,))

    def grad_fn(g):
        if not a.requires_grad:
            return
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.values.shape))
        else:
            if not keepdims:
                g = np.expand_dims(g, axis)
            _accumulate(a, np.broadcast_to(g, a.values.shape))

    out._backward = grad_fn
    return out


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.values.size if axis is None else a.values.shape[axis]
    return mul(tensor_sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.values for t in tensors], axis=axis), _parents=tuple(tensors))
    sizes = [t.values.shape[axis] for t in tensors]

    def grad_fn(g):
        offset = 0
        for t, size in zip(tensors, sizes):
            if t.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(offset, offset + size)
                _accumulate(t, g[tuple(index)])
            offset += size

    out._backward = grad_fn
    return out


def getitem(a, key) -> Tensor:
    """Basic (non-fancy) indexing with gradient scatter on backward."""
    a = as_tensor(a)
    out = Tensor(a.values[key], _parents=(a,))

    def grad_fn(g):
        if a.requires_grad:
            buf = np.zeros_like(a.values)
            buf[key] += g
            _accumulate(a, buf)

    out._backward = grad_fn
    return out


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.values.reshape(shape), _parents=(a,))

    def grad_fn(g):
        if a.requires_grad:
            _accumulate(a, g.reshape(a.values.shape))

    out._backward = grad_fn
    return out


def swap_last(a) -> Tensor:
    """Transpose the last two axes."""
    a = as_tensor(a)
    if a.values.ndim < 2:
        raise ShapeError("swap_last needs at least 2 dimensions")
    out = Tensor(np.swapaxes(a.values, -1, -2), _parents=(a,))

    def grad_fn(g):
        if a.requires_grad:
            _accumulate(a, np.swapaxes(g, -1, -2))

    out._backward = grad_fn
    return out


def broadcast_to(a, shape) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.broadcast_to(a.values, shape).copy(), _parents=(a,))

    def grad_fn(g):
        if a.requires_grad:
            _accumulate(a, g)

    out._backward = grad_fn
    return out


def masked_softmax(logits: Tensor, mask: np.ndarray) -> Tensor:
    """Row-wise softmax over the last axis restricted to ``mask`` entries.

    Masked-out positions get probability exactly 0; each row must contain
    at least one masked-in entry. The shift by the row maximum is a
    detached constant, which leaves softmax gradients unchanged.
    """
    logits = as_tensor(logits)
    mask = np.asarray(mask, dtype=bool)
    shifted_source = np.where(mask, logits.values, -np.inf)
    row_max = shifted_source.max(axis=-1, keepdims=True)
    if np.any(~np.isfinite(row_max)):
        raise ShapeError("masked_softmax saw a row with no unmasked entries")
    weights = mul(exp(sub(logits, row_max)), mask.astype(float))
    return div(weights, tensor_sum(weights, axis=-1, keepdims=True))


def backward(loss: Tensor, free_graph: bool = True) -> None:
    """Populate gradients of everything the scalar ``loss`` depends on.

    The sweep visits nodes in reverse topological order, which is
    deterministic for a fixed sequence of operations. With ``free_graph``
    the tape edges are dropped afterwards so intermediate buffers can be
    collected between training steps.
    """
    if not isinstance(loss, Tensor):
        raise TapeError("backward requires a Tensor loss")
    if loss.values.size != 1:
        raise TapeError(f"backward requires a scalar loss, got shape {loss.values.shape}")
    if not loss.requires_grad:
        raise TapeError("backward on a detached tensor: nothing requires gradients")

    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if node.node_id in visited:
            continue
        visited.add(node.node_id)
        stack.append((node, True))
        for parent in node._parents:
            if parent.node_id not in visited and parent.requires_grad:
                stack.append((parent, False))

    loss.grad = np.ones_like(loss.values)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
        if free_graph and node._parents:
            node._parents = ()
            node._backward = None
