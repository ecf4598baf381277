"""Reverse-mode differentiation over numpy arrays, purpose-built for the
pose generator: affine layers, gate nonlinearities, quaternion algebra,
renormalization, forward kinematics, and the training losses. Nothing more.

Every helper here accepts plain ndarrays too and then just computes with
numpy, so inference and gradient checking can share the model code.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad back down to `shape` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """A value in the computation graph; backward() fills .grad leaf arrays."""

    __slots__ = ("value", "grad", "_parents", "_backward", "requires_grad")

    # make ndarray <op> Tensor defer to the reflected operators below
    __array_ufunc__ = None

    def __init__(self, value, requires_grad: bool = False):
        self.value = np.asarray(value, dtype=float)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.value.shape

    @staticmethod
    def _node(value, parents, backward):
        out = Tensor(value)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def _accumulate(self, grad: np.ndarray) -> None:
        grad = _unbroadcast(np.asarray(grad, dtype=float), self.value.shape)
        self.grad = grad if self.grad is None else self.grad + grad

    def backward(self) -> None:
        order: list[Tensor] = []
        seen: set[int] = set()

        def visit(node: Tensor) -> None:
            stack = [(node, False)]
            while stack:
                n, done = stack.pop()
                if done:
                    order.append(n)
                    continue
                if id(n) in seen or not n.requires_grad:
                    continue
                seen.add(id(n))
                stack.append((n, True))
                for p in n._parents:
                    stack.append((p, False))

        visit(self)
        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)

        def backward(g):
            self._accumulate(g)
            other._accumulate(g)

        return Tensor._node(self.value + other.value, (self, other), backward)

    __radd__ = __add__

    def __neg__(self):
        def backward(g):
            self._accumulate(-g)

        return Tensor._node(-self.value, (self,), backward)

    def __sub__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)

        def backward(g):
            self._accumulate(g)
            other._accumulate(-g)

        return Tensor._node(self.value - other.value, (self, other), backward)

    def __rsub__(self, other):
        return Tensor(other) - self

    def __mul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)

        def backward(g):
            self._accumulate(g * other.value)
            other._accumulate(g * self.value)

        return Tensor._node(self.value * other.value, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)

        def backward(g):
            self._accumulate(g / other.value)
            other._accumulate(-g * self.value / (other.value * other.value))

        return Tensor._node(self.value / other.value, (self, other), backward)

    def __rtruediv__(self, other):
        return Tensor(other) / self

    def __pow__(self, exponent: float):
        def backward(g):
            self._accumulate(g * exponent * self.value ** (exponent - 1))

        return Tensor._node(self.value ** exponent, (self,), backward)

    def __matmul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)

        def backward(g):
            self._accumulate(g @ other.value.T)
            other._accumulate(self.value.T @ g)

        return Tensor._node(self.value @ other.value, (self, other), backward)

    def __rmatmul__(self, other):
        return Tensor(other) @ self

    def __getitem__(self, key):
        def backward(g):
            full = np.zeros_like(self.value)
            full[key] = g
            self._accumulate(full)

        return Tensor._node(self.value[key], (self,), backward)

    def reshape(self, *shape):
        def backward(g):
            self._accumulate(g.reshape(self.value.shape))

        return Tensor._node(self.value.reshape(*shape), (self,), backward)

    def transpose(self):
        def backward(g):
            self._accumulate(g.T)

        return Tensor._node(self.value.T, (self,), backward)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def is_tensor(x) -> bool:
    return isinstance(x, Tensor)


def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Tensor) else np.asarray(x, dtype=float)


# -- elementwise functions (numpy passthrough when no Tensor is involved) ----


def tanh(x):
    if not isinstance(x, Tensor):
        return np.tanh(x)
    y = np.tanh(x.value)

    def backward(g):
        x._accumulate(g * (1.0 - y * y))

    return Tensor._node(y, (x,), backward)


def sigmoid(x):
    if not isinstance(x, Tensor):
        return 1.0 / (1.0 + np.exp(-x))
    y = 1.0 / (1.0 + np.exp(-x.value))

    def backward(g):
        x._accumulate(g * y * (1.0 - y))

    return Tensor._node(y, (x,), backward)


def exp(x):
    if not isinstance(x, Tensor):
        return np.exp(x)
    y = np.exp(x.value)

    def backward(g):
        x._accumulate(g * y)

    return Tensor._node(y, (x,), backward)


def log(x):
    if not isinstance(x, Tensor):
        return np.log(x)

    def backward(g):
        x._accumulate(g / x.value)

    return Tensor._node(np.log(x.value), (x,), backward)


def sqrt(x):
    if not isinstance(x, Tensor):
        return np.sqrt(x)
    y = np.sqrt(x.value)

    def backward(g):
        x._accumulate(g * 0.5 / y)

    return Tensor._node(y, (x,), backward)


def sin(x):
    if not isinstance(x, Tensor):
        return np.sin(x)

    def backward(g):
        x._accumulate(g * np.cos(x.value))

    return Tensor._node(np.sin(x.value), (x,), backward)


def arccos(x):
    if not isinstance(x, Tensor):
        return np.arccos(x)

    def backward(g):
        x._accumulate(-g / np.sqrt(1.0 - x.value * x.value))

    return Tensor._node(np.arccos(x.value), (x,), backward)


def minimum(x, bound: float):
    """Elementwise min against a constant; gradient passes where x < bound."""
    if not isinstance(x, Tensor):
        return np.minimum(x, bound)
    mask = x.value < bound

    def backward(g):
        x._accumulate(g * mask)

    return Tensor._node(np.minimum(x.value, bound), (x,), backward)


def where(cond: np.ndarray, a, b):
    """Select by a constant boolean mask; both branches must be finite."""
    cond = np.asarray(cond)
    if not (isinstance(a, Tensor) or isinstance(b, Tensor)):
        return np.where(cond, a, b)
    a = _wrap(a)
    b = _wrap(b)

    def backward(g):
        a._accumulate(np.where(cond, g, 0.0))
        b._accumulate(np.where(cond, 0.0, g))

    return Tensor._node(np.where(cond, a.value, b.value), (a, b), backward)


def tsum(x, axis=None, keepdims=False):
    if not isinstance(x, Tensor):
        return np.sum(x, axis=axis, keepdims=keepdims)
    y = np.sum(x.value, axis=axis, keepdims=keepdims)

    def backward(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        x._accumulate(np.broadcast_to(g, x.value.shape))

    return Tensor._node(y, (x,), backward)


def mean(x, axis=None, keepdims=False):
    n = np.prod(value_of(x).shape) if axis is None else value_of(x).shape[axis]
    return tsum(x, axis=axis, keepdims=keepdims) / float(n)


def concat(parts, axis=-1):
    if not any(isinstance(p, Tensor) for p in parts):
        return np.concatenate(parts, axis=axis)
    parts = [_wrap(p) for p in parts]
    sizes = [p.value.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            index = [slice(None)] * g.ndim
            index[axis] = slice(lo, hi)
            p._accumulate(g[tuple(index)])

    return Tensor._node(np.concatenate([p.value for p in parts], axis=axis),
                        tuple(parts), backward)


def stack(parts, axis=0):
    if not any(isinstance(p, Tensor) for p in parts):
        return np.stack(parts, axis=axis)
    parts = [_wrap(p) for p in parts]

    def backward(g):
        slabs = np.split(g, len(parts), axis=axis)
        for p, slab in zip(parts, slabs):
            p._accumulate(np.squeeze(slab, axis=axis))

    return Tensor._node(np.stack([p.value for p in parts], axis=axis),
                        tuple(parts), backward)


def quat_logdist_sq(pred, gt: np.ndarray):
    """Per-joint squared geodesic distance between pred and constant gt quats.

    pred has shape (..., 4); gt broadcasts against it. Implemented as one
    primitive with an analytic gradient so the s -> 0 limit (perfect fit)
    stays finite. Matches core.quat_log_distance_sq in value.
    """
    from .. import quat as q

    gt = np.asarray(gt, dtype=float)
    pred_v = value_of(pred)
    rel = q.mul(q.conjugate(gt), pred_v)
    w = rel[..., 0]
    v = rel[..., 1:]
    s = np.linalg.norm(v, axis=-1)
    s_safe = np.where(s < 1e-14, 0.0, s)
    u = np.abs(w)
    phi = np.arctan2(s_safe, u)
    out_value = phi * phi
    if not isinstance(pred, Tensor):
        return out_value

    def backward(g):
        denom = s * s + w * w  # ~1 for unit quaternions
        small = s < 1e-8
        # d(phi^2)/dv_i = 2 phi * u * v_i / (s * denom); series limit 2 v_i / u^2
        with np.errstate(divide="ignore", invalid="ignore"):
            coeff = np.where(small, 2.0 / np.maximum(u * u, 1e-300),
                             2.0 * phi * u / np.where(small, 1.0, s * denom))
        grad_v = coeff[..., None] * v
        grad_w = (-2.0 * phi * np.sign(w) * s / denom)[..., None]
        grad_rel = np.concatenate([grad_w, grad_v], axis=-1) * g[..., None]
        # rel = conj(gt) * pred is linear in pred; chain through the transpose
        # of the left-multiplication matrix of conj(gt)
        gw, gx, gy, gz = (np.broadcast_to(gt[..., i], w.shape) for i in range(4))
        rw, rx, ry, rz = (grad_rel[..., i] for i in range(4))
        grad_pred = np.stack([
            gw * rw - gx * rx - gy * ry - gz * rz,
            gx * rw + gw * rx - gz * ry + gy * rz,
            gy * rw + gz * rx + gw * ry - gx * rz,
            gz * rw - gy * rx + gx * ry + gw * rz,
        ], axis=-1)
        pred._accumulate(grad_pred)

    return Tensor._node(out_value, (pred,), backward)
