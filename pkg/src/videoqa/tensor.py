"""Dense float64 tensors with reverse-mode automatic differentiation.

Every value in the model is a ``Tensor`` wrapping a row-major numpy float64
array. Operations record a computation graph; ``Tensor.backward()`` walks it
once in reverse topological order and accumulates gradients into ``.grad``.

Conventions fixed here:
  * double precision everywhere (verification over speed),
  * any op producing NaN/Inf raises immediately,
  * ReLU subgradient at 0 is 0; ELU uses alpha=1,
  * softmax/layer-norm normalize along the last axis.
"""

from __future__ import annotations

import numpy as np

_grad_enabled = True


def is_grad_enabled() -> bool:
    return _grad_enabled


class no_grad:
    """Context manager that disables graph recording (evaluation, numeric diffs)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values produced by op '{op}'")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` over axes that were broadcast when reaching `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A dense float64 array plus the bookkeeping for reverse-mode autodiff.

    ``_parents`` is an ordered tuple; backward traversal follows it
    deterministically so repeated runs accumulate gradients in the same
    order (bitwise reproducibility).
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward_fn", "_op")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        _check_finite(arr, "leaf")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward_fn = None
        self._op = "leaf"

    @classmethod
    def _from_op(cls, data: np.ndarray, op: str, parents, backward_fn) -> "Tensor":
        _check_finite(data, op)
        t = cls.__new__(cls)
        t.data = data
        t.grad = None
        needs = _grad_enabled and any(p.requires_grad for p in parents)
        t.requires_grad = needs
        if needs:
            t._parents = tuple(parents)
            t._backward_fn = backward_fn
            t._op = op
        else:
            t._parents = ()
            t._backward_fn = None
            t._op = op
        return t

    # -- basics ------------------------------------------------------------

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
            raise ValueError("item() requires a single-element tensor")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self._op}, requires_grad={self.requires_grad})"

    # -- backward ----------------------------------------------------------

    def backward(self) -> None:
        """Reverse-mode accumulation from a scalar loss.

        Visits each reachable node exactly once, in reverse topological
        order. Gradients accumulate (repeated calls add up), matching the
        linearity of differentiation.
        """
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss tensor")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward_fn is not None:
                node._backward_fn(node.grad)

    # -- elementwise arithmetic ---------------------------------------------

    def __add__(self, other):
        if isinstance(other, Tensor):
            out = self.data + other.data

            def bw(g, a=self, b=other):
                if a.requires_grad:
                    a._accumulate(_unbroadcast(g, a.data.shape))
                if b.requires_grad:
                    b._accumulate(_unbroadcast(g, b.data.shape))

            return Tensor._from_op(out, "add", (self, other), bw)
        out = self.data + other

        def bw(g, a=self):
            a._accumulate(_unbroadcast(g, a.data.shape))

        return Tensor._from_op(out, "add", (self,), bw)

    __radd__ = __add__

    def __neg__(self):
        def bw(g, a=self):
            a._accumulate(-g)

        return Tensor._from_op(-self.data, "neg", (self,), bw)

    def __sub__(self, other):
        if isinstance(other, Tensor):
            out = self.data - other.data

            def bw(g, a=self, b=other):
                if a.requires_grad:
                    a._accumulate(_unbroadcast(g, a.data.shape))
                if b.requires_grad:
                    b._accumulate(_unbroadcast(-g, b.data.shape))

            return Tensor._from_op(out, "sub", (self, other), bw)
        return self.__add__(-other)

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            out = self.data * other.data

            def bw(g, a=self, b=other):
                if a.requires_grad:
                    a._accumulate(_unbroadcast(g * b.data, a.data.shape))
                if b.requires_grad:
                    b._accumulate(_unbroadcast(g * a.data, b.data.shape))

            return Tensor._from_op(out, "mul", (self, other), bw)
        out = self.data * other

        def bw(g, a=self, c=other):
            a._accumulate(_unbroadcast(g * c, a.data.shape))

        return Tensor._from_op(out, "mul", (self,), bw)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            out = self.data / other.data

            def bw(g, a=self, b=other):
                if a.requires_grad:
                    a._accumulate(_unbroadcast(g / b.data, a.data.shape))
                if b.requires_grad:
                    b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

            return Tensor._from_op(out, "div", (self, other), bw)
        return self.__mul__(1.0 / other)

    # -- shape ops -----------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        orig = self.data.shape
        out = self.data.reshape(shape)

        def bw(g, a=self, orig=orig):
            a._accumulate(g.reshape(orig))

        return Tensor._from_op(out, "reshape", (self,), bw)

    def transpose(self, axes):
        axes = tuple(axes)
        inv = tuple(np.argsort(axes))
        out = np.transpose(self.data, axes)

        def bw(g, a=self, inv=inv):
            a._accumulate(np.transpose(g, inv))

        return Tensor._from_op(out, "transpose", (self,), bw)

    def swap_last2(self):
        n = self.data.ndim
        if n < 2:
            raise ValueError("swap_last2 requires ndim >= 2")
        axes = tuple(range(n - 2)) + (n - 1, n - 2)
        return self.transpose(axes)

    def __getitem__(self, key):
        out = self.data[key]
        if np.isscalar(out) or out.ndim == 0:
            out = np.asarray(out, dtype=np.float64)

        def bw(g, a=self, key=key):
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            a.grad[key] += g

        return Tensor._from_op(out, "slice", (self,), bw)

    # -- reductions ------------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out = self.data.sum(axis=axis, keepdims=keepdims)
        out = np.asarray(out, dtype=np.float64)

        def bw(g, a=self, axis=axis, keepdims=keepdims):
            if axis is None:
                a._accumulate(np.broadcast_to(g, a.data.shape).copy())
                return
            if not keepdims:
                g = np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(g, a.data.shape).copy())

        return Tensor._from_op(out, "sum", (self,), bw)

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            count = self.data.size
        elif isinstance(axis, tuple):
            count = int(np.prod([self.data.shape[a] for a in axis]))
        else:
            count = self.data.shape[axis]
        if count == 0:
            raise ValueError("mean over an empty axis")
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # -- matmul ------------------------------------------------------------------

    def __matmul__(self, other):
        if not isinstance(other, Tensor):
            other = Tensor(other)
        if self.data.ndim < 2 or other.data.ndim < 2:
            raise ValueError("matmul requires matrices (ndim >= 2); reshape vectors first")
        out = np.matmul(self.data, other.data)

        def bw(g, a=self, b=other):
            if a.requires_grad:
                ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
                a._accumulate(_unbroadcast(ga, a.data.shape))
            if b.requires_grad:
                gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
                b._accumulate(_unbroadcast(gb, b.data.shape))

        return Tensor._from_op(out, "matmul", (self, other), bw)


# -- module-level ops -----------------------------------------------------------


def exp(t: Tensor) -> Tensor:
    out = np.exp(t.data)

    def bw(g, a=t, out=out):
        a._accumulate(g * out)

    return Tensor._from_op(out, "exp", (t,), bw)


def log(t: Tensor) -> Tensor:
    out = np.log(t.data)

    def bw(g, a=t):
        a._accumulate(g / a.data)

    return Tensor._from_op(out, "log", (t,), bw)


def relu(t: Tensor) -> Tensor:
    # subgradient at 0 fixed to 0
    mask = t.data > 0
    out = np.where(mask, t.data, 0.0)

    def bw(g, a=t, mask=mask):
        a._accumulate(g * mask)

    return Tensor._from_op(out, "relu", (t,), bw)


def elu(t: Tensor) -> Tensor:
    """ELU with alpha=1: x for x > 0, exp(x) - 1 otherwise."""
    pos = t.data > 0
    expm1 = np.expm1(t.data)
    out = np.where(pos, t.data, expm1)

    def bw(g, a=t, pos=pos, expm1=expm1):
        a._accumulate(g * np.where(pos, 1.0, expm1 + 1.0))

    return Tensor._from_op(out, "elu", (t,), bw)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ValueError("concat of zero tensors")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g, parts=tensors, splits=splits, axis=axis):
        pieces = np.split(g, splits, axis=axis)
        for p, piece in zip(parts, pieces):
            if p.requires_grad:
                p._accumulate(piece)

    return Tensor._from_op(out, "concat", tuple(tensors), bw)


def take_rows(table: Tensor, indices) -> Tensor:
    """Gather rows of a 2-D table by integer index (embedding lookup)."""
    idx = np.asarray(indices, dtype=np.int64)
    if table.data.ndim != 2:
        raise ValueError("take_rows expects a 2-D table")
    out = table.data[idx]

    def bw(g, a=table, idx=idx):
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        np.add.at(a.grad, idx, g)

    return Tensor._from_op(out, "take_rows", (table,), bw)


def softmax_rows(t: Tensor) -> Tensor:
    """Softmax along the last axis, with max-subtraction for stability.

    Each row of the output is nonnegative and sums to one. The shift by the
    (detached) row max is exact: softmax is invariant to constant shifts.
    """
    if t.data.ndim < 1 or t.data.shape[-1] == 0:
        raise ValueError("softmax over an empty axis")
    shifted = t.data - t.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def bw(g, a=t, p=out):
        inner = (g * p).sum(axis=-1, keepdims=True)
        a._accumulate(p * (g - inner))

    return Tensor._from_op(out, "softmax", (t,), bw)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale and shift.

    Population (1/n) variance; eps sits inside the square root.
    """
    if x.data.ndim < 1 or x.data.shape[-1] == 0:
        raise ValueError("layer_norm over an empty axis")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def bw(g, a=x, gn=gain, bs=bias, xhat=xhat, inv=inv):
        if gn.requires_grad:
            gn._accumulate(_unbroadcast(g * xhat, gn.data.shape))
        if bs.requires_grad:
            bs._accumulate(_unbroadcast(g, bs.data.shape))
        if a.requires_grad:
            gh = g * gn.data
            m1 = gh.mean(axis=-1, keepdims=True)
            m2 = (gh * xhat).mean(axis=-1, keepdims=True)
            a._accumulate(inv * (gh - m1 - xhat * m2))

    return Tensor._from_op(out, "layer_norm", (x, gain, bias), bw)


def logsumexp(t: Tensor) -> Tensor:
    """log(sum(exp(t))) over all elements, max-shifted for stability."""
    m = float(t.data.max())
    return log(exp(t - m).sum()) + m


def log_softmax_rows(t: Tensor) -> Tensor:
    """Log-softmax along the last axis."""
    m = t.data.max(axis=-1, keepdims=True)
    shifted = t - m
    return shifted - log(exp(shifted).sum(axis=-1, keepdims=True))
