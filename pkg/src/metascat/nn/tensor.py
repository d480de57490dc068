"""Array-valued reverse-mode autodiff on a dynamic tape.

Each operation records its parents and a closure producing the parents'
gradients from the upstream gradient; ``Tensor.backward`` walks the tape
in reverse topological order. The op set is intentionally small: exactly
what the denoiser's forward pass uses.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    """A numpy array plus its place in the autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_grad_fn")

    def __init__(self, data, requires_grad=False, parents=(), grad_fn=None):
        self.data = np.asarray(data)
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.grad = None
        self._parents = parents
        self._grad_fn = grad_fn

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def backward(self):
        """Accumulate gradients of this (scalar) tensor into the graph."""
        if self.data.ndim != 0:
            raise ValueError("backward() expects a scalar loss tensor")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                stack.append((parent, False))
        self.grad = np.ones((), dtype=self.data.dtype)
        for node in reversed(order):
            if node._grad_fn is None or node.grad is None:
                continue
            for parent, grad in zip(node._parents, node._grad_fn(node.grad)):
                if not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = grad
                else:
                    parent.grad = parent.grad + grad

    # -- elementwise arithmetic (with broadcasting) -------------------------

    def __add__(self, other):
        other = _as_tensor(other, self.dtype)
        return Tensor(
            self.data + other.data,
            parents=(self, other),
            grad_fn=lambda g: (
                _unbroadcast(g, self.shape),
                _unbroadcast(g, other.shape),
            ),
        )

    def __sub__(self, other):
        other = _as_tensor(other, self.dtype)
        return Tensor(
            self.data - other.data,
            parents=(self, other),
            grad_fn=lambda g: (
                _unbroadcast(g, self.shape),
                _unbroadcast(-g, other.shape),
            ),
        )

    def __mul__(self, other):
        other = _as_tensor(other, self.dtype)
        return Tensor(
            self.data * other.data,
            parents=(self, other),
            grad_fn=lambda g: (
                _unbroadcast(g * other.data, self.shape),
                _unbroadcast(g * self.data, other.shape),
            ),
        )

    def power(self, exponent: float):
        data = self.data**exponent
        return Tensor(
            data,
            parents=(self,),
            grad_fn=lambda g: (g * exponent * self.data ** (exponent - 1.0),),
        )

    # -- shape manipulation --------------------------------------------------

    def reshape(self, *shape):
        old = self.shape
        return Tensor(
            self.data.reshape(*shape),
            parents=(self,),
            grad_fn=lambda g: (g.reshape(old),),
        )

    def mean(self, axis, keepdims=True):
        count = float(np.prod([self.shape[a] for a in np.atleast_1d(axis)]))
        data = self.data.mean(axis=axis, keepdims=keepdims)

        def grad_fn(g):
            if not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g / count, self.shape).astype(self.dtype),)

        return Tensor(data, parents=(self,), grad_fn=grad_fn)


def _as_tensor(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a gradient over the axes numpy broadcast during the forward op."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def constant(data, dtype=None) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype))


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def mean_all(x: Tensor) -> Tensor:
    count = x.data.size
    return Tensor(
        x.data.mean(),
        parents=(x,),
        grad_fn=lambda g: (np.broadcast_to(g / count, x.shape).astype(x.dtype),),
    )


def mse_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean squared error over every element of the batch."""
    diff = pred - Tensor(np.asarray(target, dtype=pred.dtype))
    return mean_all(diff.power(2.0))


def silu(x: Tensor) -> Tensor:
    sig = 1.0 / (1.0 + np.exp(-x.data))
    return Tensor(
        x.data * sig,
        parents=(x,),
        grad_fn=lambda g: (g * sig * (1.0 + x.data * (1.0 - sig)),),
    )


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """x[B, Din] @ weight[Dout, Din].T + bias[Dout]."""
    data = x.data @ weight.data.T + bias.data

    def grad_fn(g):
        return (g @ weight.data, g.T @ x.data, g.sum(axis=0))

    return Tensor(data, parents=(x, weight, bias), grad_fn=grad_fn)


def conv1d(
    x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, padding: int = 1
) -> Tensor:
    """1D convolution: x[B, Cin, L], weight[Cout, Cin, K], bias[Cout]."""
    batch, c_in, length = x.shape
    c_out, c_in_w, kernel = weight.shape
    if c_in_w != c_in:
        raise ValueError(f"conv1d channel mismatch: input {c_in}, weight {c_in_w}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding)))
    l_out = (length + 2 * padding - kernel) // stride + 1
    starts = np.arange(l_out) * stride
    # cols[b, i*K + k, l] = xp[b, i, l*stride + k]
    cols = np.stack([xp[:, :, starts + k] for k in range(kernel)], axis=2).reshape(
        batch, c_in * kernel, l_out
    )
    w2d = weight.data.reshape(c_out, c_in * kernel)
    data = np.matmul(w2d, cols) + bias.data[:, None]

    def grad_fn(g):
        g_bias = g.sum(axis=(0, 2))
        g_weight = (
            np.matmul(g, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
        )
        g_cols = np.matmul(w2d.T, g).reshape(batch, c_in, kernel, l_out)
        g_xp = np.zeros_like(xp)
        # within one kernel offset the column positions never repeat
        span = (l_out - 1) * stride + 1
        for k in range(kernel):
            g_xp[:, :, k : k + span : stride] += g_cols[:, :, k, :]
        g_x = g_xp[:, :, padding : padding + length] if padding else g_xp
        return (g_x, g_weight, g_bias)

    return Tensor(data, parents=(x, weight, bias), grad_fn=grad_fn)


def concat(tensors: list[Tensor], axis: int = 1) -> Tensor:
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def grad_fn(g):
        slicer = [slice(None)] * g.ndim
        grads = []
        for i in range(len(sizes)):
            slicer[axis] = slice(offsets[i], offsets[i + 1])
            grads.append(g[tuple(slicer)])
        return tuple(grads)

    return Tensor(data, parents=tuple(tensors), grad_fn=grad_fn)


def upsample2(x: Tensor) -> Tensor:
    """Nearest-neighbor upsampling by 2 along the last axis."""
    data = np.repeat(x.data, 2, axis=-1)

    def grad_fn(g):
        return (g.reshape(*x.shape, 2).sum(axis=-1),)

    return Tensor(data, parents=(x,), grad_fn=grad_fn)


def crop(x: Tensor, length: int) -> Tensor:
    """Keep the first ``length`` entries of the last axis."""
    if x.shape[-1] == length:
        return x

    def grad_fn(g):
        pad = [(0, 0)] * (g.ndim - 1) + [(0, x.shape[-1] - length)]
        return (np.pad(g, pad),)

    return Tensor(x.data[..., :length], parents=(x,), grad_fn=grad_fn)
