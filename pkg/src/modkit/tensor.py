"""Dense float64 tensors with reverse-mode automatic differentiation.

The graph is a dynamic tape: every operation whose inputs require gradients
links its output back to them through a backward closure. ``backward()`` on a
scalar loss walks the tape once in reverse topological order and then frees
it, so a fresh graph is built on every forward pass.
"""

from __future__ import annotations

import numpy as np

GELU_C = float(np.sqrt(2.0 / np.pi))


class NumericsError(RuntimeError):
    """Raised when a non-finite value appears anywhere in the graph."""


_GRAD_ENABLED = True


class no_grad:
    """Context manager: op outputs inside do not join the tape."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def _check_finite(data: np.ndarray, op: str) -> None:
    # sum() trick: a NaN/Inf anywhere poisons the sum, and one scalar check
    # is far cheaper than isfinite() over the whole buffer
    if data.size and not np.isfinite(float(data.sum())):
        raise NumericsError(f"non-finite values produced by op '{op}'")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] > 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """A float64 array plus an optional gradient buffer and tape linkage."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._backward = None
        self._op = "leaf"
        _check_finite(self.data, "leaf")

    # ---- construction -----------------------------------------------------

    @classmethod
    def _from_op(cls, data, parents, backward, op):
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.requires_grad = _GRAD_ENABLED and any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = parents
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        out._op = op
        _check_finite(data, op)
        return out

    # ---- basic introspection ----------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of shape {self.shape}")
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    # ---- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, (int, float)):
            data = self.data + float(other)

            def backward(g, a=self):
                a._accumulate(g)

            return Tensor._from_op(data, (self,), backward, "add_scalar")
        data = self.data + other.data

        def backward(g, a=self, b=other):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g, b.data.shape))

        return Tensor._from_op(data, (self, other), backward, "add")

    def __radd__(self, other):
        return self.__add__(other)

    def __neg__(self):
        def backward(g, a=self):
            a._accumulate(-g)

        return Tensor._from_op(-self.data, (self,), backward, "neg")

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return self.__add__(-float(other))
        data = self.data - other.data

        def backward(g, a=self, b=other):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(-g, b.data.shape))

        return Tensor._from_op(data, (self, other), backward, "sub")

    def __rsub__(self, other):
        return (-self).__add__(float(other))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            c = float(other)

            def backward(g, a=self):
                a._accumulate(g * c)

            return Tensor._from_op(self.data * c, (self,), backward, "mul_scalar")
        data = self.data * other.data

        def backward(g, a=self, b=other):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * b.data, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * a.data, b.data.shape))

        return Tensor._from_op(data, (self, other), backward, "mul")

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if not isinstance(other, (int, float)):
            raise TypeError("tensor/tensor division is not supported; multiply by a reciprocal")
        return self.__mul__(1.0 / float(other))

    def __matmul__(self, other):
        return self.matmul(other)

    def matmul(self, other: "Tensor") -> "Tensor":
        """Matrix product; leading axes broadcast, last two contract."""
        if self.ndim < 2 or other.ndim < 2:
            raise ValueError("matmul operands must have ndim >= 2")
        if self.data.shape[-1] != other.data.shape[-2]:
            raise ValueError(
                f"matmul inner extents differ: {self.data.shape} @ {other.data.shape}"
            )
        if self.ndim > 2 and other.ndim == 2:
            # stacked rows against one matrix: cheap exact gradients, no
            # broadcast reduction needed
            data = self.data @ other.data

            def backward(g, a=self, b=other):
                if a.requires_grad:
                    a._accumulate(g @ b.data.T)
                if b.requires_grad:
                    g2 = g.reshape(-1, g.shape[-1])
                    b._accumulate(a.data.reshape(-1, a.data.shape[-1]).T @ g2)

            return Tensor._from_op(data, (self, other), backward, "matmul")
        data = self.data @ other.data

        def backward(g, a=self, b=other):
            if a.requires_grad:
                ga = g @ np.swapaxes(b.data, -1, -2)
                a._accumulate(_unbroadcast(ga, a.data.shape))
            if b.requires_grad:
                gb = np.swapaxes(a.data, -1, -2) @ g
                b._accumulate(_unbroadcast(gb, b.data.shape))

        return Tensor._from_op(data, (self, other), backward, "matmul")

    # ---- shape ops ----------------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape
        data = self.data.reshape(shape)

        def backward(g, a=self):
            a._accumulate(g.reshape(old))

        return Tensor._from_op(data, (self,), backward, "reshape")

    def transpose(self, axes) -> "Tensor":
        axes = tuple(axes)
        inv = tuple(np.argsort(axes))
        data = np.transpose(self.data, axes)

        def backward(g, a=self):
            a._accumulate(np.transpose(g, inv))

        return Tensor._from_op(data, (self,), backward, "transpose")

    def narrow(self, axis: int, start: int, length: int) -> "Tensor":
        """Contiguous slice [start, start+length) along one axis."""
        idx = [slice(None)] * self.ndim
        idx[axis] = slice(start, start + length)
        idx = tuple(idx)
        data = self.data[idx]

        def backward(g, a=self):
            full = np.zeros_like(a.data)
            full[idx] = g
            a._accumulate(full)

        return Tensor._from_op(data, (self,), backward, "narrow")

    # ---- reductions ---------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        data = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(g, a=self, ax=axis, kd=keepdims):
            if ax is None:
                a._accumulate(np.broadcast_to(g, a.data.shape).copy())
                return
            if not kd:
                g = np.expand_dims(g, ax)
            a._accumulate(np.broadcast_to(g, a.data.shape).copy())

        return Tensor._from_op(np.asarray(data), (self,), backward, "sum")

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # ---- autodiff -----------------------------------------------------------

    def backward(self) -> None:
        """Populate gradients of every reachable requires_grad tensor.

        The loss must be scalar. The tape is freed afterwards: a second call
        needs a fresh forward pass.
        """
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar loss, got shape {self.shape}")
        # iterative topological sort; graphs can exceed the recursion limit
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)
            if node._parents:
                # interior gradients are scratch; free tape as we go
                node._parents = ()
                node._backward = None
                node.grad = None


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]

    def backward(g, ts=tensors, ax=axis, sz=sizes):
        offset = 0
        for t, n in zip(ts, sz):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[ax] = slice(offset, offset + n)
                t._accumulate(g[tuple(idx)])
            offset += n

    return Tensor._from_op(data, tuple(tensors), backward, "concat")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Row-stable softmax: max is subtracted before exponentiation."""
    if x.data.shape[axis] == 0:
        raise ValueError("softmax over an empty axis")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g, a=x, s=s, ax=axis):
        inner = (g * s).sum(axis=ax, keepdims=True)
        a._accumulate(s * (g - inner))

    return Tensor._from_op(s, (x,), backward, "softmax")


def layer_norm(x: Tensor, eps: float = 1e-6) -> Tensor:
    """Zero-mean, unit-variance normalization over the last axis."""
    if x.data.shape[-1] < 1:
        raise ValueError("layer_norm needs a non-empty last axis")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv

    def backward(g, a=x, xhat=xhat, inv=inv):
        gm = g.mean(axis=-1, keepdims=True)
        gx = (g * xhat).mean(axis=-1, keepdims=True)
        a._accumulate(inv * (g - gm - xhat * gx))

    return Tensor._from_op(xhat, (x,), backward, "layer_norm")


def gelu(x: Tensor) -> Tensor:
    """tanh-approximation GELU."""
    sq = x.data * x.data
    u = sq * (0.044715 * GELU_C)
    u += GELU_C
    u *= x.data
    t = np.tanh(u)
    y = t + 1.0
    y *= x.data
    y *= 0.5

    def backward(g, a=x, t=t, sq=sq):
        du = sq * (3 * 0.044715 * GELU_C)
        du += GELU_C
        sech2 = 1.0 - t * t
        dy = du
        dy *= sech2
        dy *= a.data
        dy += 1.0 + t
        dy *= 0.5
        a._accumulate(g * dy)

    return Tensor._from_op(y, (x,), backward, "gelu")


def mse(a: Tensor, b: Tensor) -> Tensor:
    """Mean squared error over all elements."""
    d = a - b
    return (d * d).mean()


def adaln(x: Tensor, table: Tensor, weight: Tensor, bias: Tensor, eps: float = 1e-6) -> Tensor:
    """Fused gate(y) * (scale(y) * layer_norm(x) + shift(y)).

    ``table`` holds per-token modulation vectors (batch, 1 or seq, d_mod);
    the affine head maps them to [scale | shift | gate] triples of x's width.
    Fusing keeps this off the gradient-copy hot path; the backward is checked
    against finite differences like every other primitive.
    """
    d = x.data.shape[-1]
    mod = table.data @ weight.data + bias.data
    scale = mod[..., :d]
    shift = mod[..., d : 2 * d]
    gate = mod[..., 2 * d :]
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    normed = (x.data - mu) * inv
    out = gate * (scale * normed + shift)

    def backward(g, x=x, table=table, weight=weight, bias=bias,
                 scale=scale, shift=shift, gate=gate, normed=normed, inv=inv):
        gg = g * gate
        if x.requires_grad:
            gn = gg * scale
            gm = gn.mean(axis=-1, keepdims=True)
            gx = (gn * normed).mean(axis=-1, keepdims=True)
            x._accumulate(inv * (gn - gm - normed * gx))
        d_mod = np.concatenate([gg * normed, gg, g * (scale * normed + shift)], axis=-1)
        d_mod = _unbroadcast(d_mod, table.data.shape[:-1] + (d_mod.shape[-1],))
        if bias.requires_grad:
            bias._accumulate(d_mod.reshape(-1, d_mod.shape[-1]).sum(axis=0))
        if weight.requires_grad:
            t2 = table.data.reshape(-1, table.data.shape[-1])
            weight._accumulate(t2.T @ d_mod.reshape(-1, d_mod.shape[-1]))
        if table.requires_grad:
            table._accumulate(d_mod @ weight.data.T)

    return Tensor._from_op(out, (x, table, weight, bias), backward, "adaln")


def attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """Fused softmax(q k^T / sqrt(d)) v over the last two axes."""
    c = q.data.shape[-1] ** -0.5
    logits = (q.data @ np.swapaxes(k.data, -1, -2)) * c
    logits -= logits.max(axis=-1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=-1, keepdims=True)
    out = w @ v.data

    def backward(g, q=q, k=k, v=v, w=w, c=c):
        if v.requires_grad:
            v._accumulate(_unbroadcast(np.swapaxes(w, -1, -2) @ g, v.data.shape))
        dw = g @ np.swapaxes(v.data, -1, -2)
        dlogit = w * (dw - (dw * w).sum(axis=-1, keepdims=True))
        if q.requires_grad:
            q._accumulate(_unbroadcast((dlogit @ k.data) * c, q.data.shape))
        if k.requires_grad:
            k._accumulate(_unbroadcast(np.swapaxes(dlogit, -1, -2) @ q.data * c, k.data.shape))

    return Tensor._from_op(out, (q, k, v), backward, "attention")
