"""Reverse-mode automatic differentiation over numpy arrays.

The whole training stack runs on a small define-by-run engine: every
operation eagerly computes its numpy result and records a closure that maps
the output gradient back to input gradients.  Calling ``Tensor.backward()``
walks the recorded graph in reverse topological order and accumulates
gradients on the leaves.

Kernels provided here cover what the signal encoder and the graph network
need: elementwise arithmetic, activations, reductions with argmax routing,
(batched) matmul, 1-D/2-D convolution, max pooling, softmax variants, shape
surgery, and symmetric band embedding/extraction for adjacency matrices.
Everything operates on float32 or float64 arrays; gradient checking is done
in float64 via central finite differences (``grad_check``).
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

__all__ = [
    "Tensor",
    "ShapeError",
    "no_grad",
    "grad_check",
    "GradCheckResult",
    "add", "sub", "mul", "div", "neg", "power",
    "relu", "leaky_relu", "gelu", "sigmoid", "tanh", "exp", "log", "sqrt",
    "reduce_sum", "reduce_mean", "reduce_max",
    "matmul", "transpose", "swapaxes", "reshape", "concat", "stack",
    "conv1d", "conv2d", "maxpool1d",
    "softmax", "log_softmax", "masked_softmax",
    "band_embed", "band_diagonal",
]

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Suspend tape recording (inference / metric evaluation)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class ShapeError(ValueError):
    """An operation received operands with incompatible shapes."""


class Tensor:
    """A numpy array plus the bookkeeping for reverse-mode differentiation.

    Leaves created with ``requires_grad=True`` receive accumulated gradients
    in ``.grad`` after ``backward()``.  Intermediate tensors keep a closure
    (``_vjp``) that converts the output gradient into parent gradients; the
    closures form the tape.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp", "_op")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._vjp = None
        self._op = "leaf"

    # -- basic protocol ----------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, op={self._op}{flag})"

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_coerce(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return _getitem(self, key)

    # -- backward pass -----------------------------------------------------

    def backward(self, grad=None):
        """Accumulate gradients on every reachable leaf.

        For scalar outputs ``grad`` may be omitted; otherwise it must match
        the output shape.
        """
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without an upstream gradient requires a scalar output")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.data.dtype)
            if grad.shape != self.data.shape:
                raise ShapeError(f"backward: gradient shape {grad.shape} != output shape {self.data.shape}")

        order = _toposort(self)
        pending = {id(self): grad}
        for node in reversed(order):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node._vjp is None:
                if node.requires_grad:
                    node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + pg
                else:
                    pending[key] = pg


def _toposort(root):
    order, seen, stack = [], set(), [(root, False)]
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
    return order


def _coerce(x, dtype):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _from_op(data, parents, vjp, op):
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    track = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out.requires_grad = track
    out._parents = tuple(parents) if track else ()
    out._vjp = vjp if track else None
    out._op = op
    return out


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (have, want) in enumerate(zip(g.shape, shape)) if want == 1 and have != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# --------------------------------------------------------------------------
# elementwise arithmetic
# --------------------------------------------------------------------------

def add(a, b):
    a = _coerce(a, getattr(b, "dtype", np.float64))
    b = _coerce(b, a.dtype)
    data = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _from_op(data, (a, b), vjp, "add")


def sub(a, b):
    a = _coerce(a, getattr(b, "dtype", np.float64))
    b = _coerce(b, a.dtype)
    data = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _from_op(data, (a, b), vjp, "sub")


def mul(a, b):
    a = _coerce(a, getattr(b, "dtype", np.float64))
    b = _coerce(b, a.dtype)
    data = a.data * b.data

    def vjp(g):
        return _unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)

    return _from_op(data, (a, b), vjp, "mul")


def div(a, b):
    a = _coerce(a, getattr(b, "dtype", np.float64))
    b = _coerce(b, a.dtype)
    data = a.data / b.data

    def vjp(g):
        ga = _unbroadcast(g / b.data, a.data.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)
        return ga, gb

    return _from_op(data, (a, b), vjp, "div")


def neg(a):
    return _from_op(-a.data, (a,), lambda g: (-g,), "neg")


def power(a, p):
    """Elementwise ``a ** p`` for a constant scalar exponent."""
    p = float(p)
    data = a.data ** p

    def vjp(g):
        return (g * p * a.data ** (p - 1.0),)

    return _from_op(data, (a,), vjp, "power")


# --------------------------------------------------------------------------
# activations and pointwise transcendentals
# --------------------------------------------------------------------------

def relu(a):
    data = np.maximum(a.data, 0)

    def vjp(g):
        return (g * (a.data > 0),)

    return _from_op(data, (a,), vjp, "relu")


def leaky_relu(a, slope=0.2):
    data = np.where(a.data > 0, a.data, slope * a.data)

    def vjp(g):
        return (g * np.where(a.data > 0, 1.0, slope).astype(a.dtype),)

    return _from_op(data, (a,), vjp, "leaky_relu")


def gelu(a):
    # exact Gaussian CDF form: x * Phi(x)
    x = a.data
    cdf = 0.5 * (1.0 + erf(x / np.sqrt(2.0)))
    data = (x * cdf).astype(a.dtype)

    def vjp(g):
        pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
        return ((g * (cdf + x * pdf)).astype(a.dtype),)

    return _from_op(data, (a,), vjp, "gelu")


def sigmoid(a):
    data = 1.0 / (1.0 + np.exp(-a.data))

    def vjp(g):
        return (g * data * (1.0 - data),)

    return _from_op(data, (a,), vjp, "sigmoid")


def tanh(a):
    data = np.tanh(a.data)

    def vjp(g):
        return (g * (1.0 - data * data),)

    return _from_op(data, (a,), vjp, "tanh")


def exp(a):
    data = np.exp(a.data)

    def vjp(g):
        return (g * data,)

    return _from_op(data, (a,), vjp, "exp")


def log(a):
    data = np.log(a.data)

    def vjp(g):
        return (g / a.data,)

    return _from_op(data, (a,), vjp, "log")


def sqrt(a):
    data = np.sqrt(a.data)

    def vjp(g):
        return (g * 0.5 / data,)

    return _from_op(data, (a,), vjp, "sqrt")


# --------------------------------------------------------------------------
# reductions
# --------------------------------------------------------------------------

def reduce_sum(a, axis=None, keepdims=False):
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.data.shape).astype(a.dtype),)

    return _from_op(data, (a,), vjp, "sum")


def reduce_mean(a, axis=None, keepdims=False):
    data = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size / max(data.size, 1)

    def vjp(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            g = np.expand_dims(g, axes)
        return ((np.broadcast_to(g, a.data.shape) / count).astype(a.dtype),)

    return _from_op(data, (a,), vjp, "mean")


def reduce_max(a, axis):
    """Max over one axis.  The backward pass routes the whole gradient to the
    stored argmax; numpy's argmax picks the lowest index on ties."""
    idx = np.argmax(a.data, axis=axis)
    data = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis)

    def vjp(g):
        gx = np.zeros_like(a.data)
        np.put_along_axis(gx, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
        return (gx,)

    return _from_op(data, (a,), vjp, "max")


# --------------------------------------------------------------------------
# linear algebra and shape surgery
# --------------------------------------------------------------------------

def matmul(a, b):
    """Matrix product with leading batch-dimension broadcasting."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be at least 2-D, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def vjp(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape)
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape)
        return ga, gb

    return _from_op(data, (a, b), vjp, "matmul")


def transpose(a, axes=None):
    data = np.transpose(a.data, axes)
    inv = None if axes is None else tuple(np.argsort(axes))

    def vjp(g):
        return (np.transpose(g, inv),)

    return _from_op(data, (a,), vjp, "transpose")


def swapaxes(a, ax1, ax2):
    data = np.swapaxes(a.data, ax1, ax2)

    def vjp(g):
        return (np.swapaxes(g, ax1, ax2),)

    return _from_op(data, (a,), vjp, "swapaxes")


def reshape(a, shape):
    data = a.data.reshape(shape)

    def vjp(g):
        return (g.reshape(a.data.shape),)

    return _from_op(data, (a,), vjp, "reshape")


def concat(tensors, axis=0):
    tensors = list(tensors)
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _from_op(data, tuple(tensors), vjp, "concat")


def stack(tensors, axis=0):
    tensors = list(tensors)
    data = np.stack([t.data for t in tensors], axis=axis)

    def vjp(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _from_op(data, tuple(tensors), vjp, "stack")


def _getitem(a, key):
    """Basic (slice/int/ellipsis) indexing; advanced indexing is rejected so
    the backward scatter can use plain ``+=``."""
    _check_basic_index(key)
    data = a.data[key]

    def vjp(g):
        gx = np.zeros_like(a.data)
        gx[key] += g
        return (gx,)

    return _from_op(data, (a,), vjp, "slice")


def _check_basic_index(key):
    parts = key if isinstance(key, tuple) else (key,)
    for p in parts:
        if isinstance(p, (int, np.integer, slice)) or p is Ellipsis or p is None:
            continue
        raise TypeError("Tensor indexing supports basic indices only (int, slice, ellipsis)")


# --------------------------------------------------------------------------
# convolution and pooling
# --------------------------------------------------------------------------

def conv1d(x, w, bias=None, stride=1, padding=0):
    """1-D convolution (cross-correlation) over the last axis.

    Parameters
    ----------
    x : Tensor, shape (B, C_in, L)
    w : Tensor, shape (C_out, C_in, K)
    bias : Tensor of shape (C_out,) or None
    """
    if x.ndim != 3 or w.ndim != 3:
        raise ShapeError(f"conv1d: expected (B,C,L) and (O,C,K), got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv1d: channel mismatch, input {x.shape} vs kernel {w.shape}")
    K = w.shape[2]
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding))) if padding else x.data
    if xp.shape[2] < K:
        raise ShapeError(f"conv1d: kernel {K} longer than padded input {xp.shape[2]}")
    win = sliding_window_view(xp, K, axis=2)[:, :, ::stride, :]
    data = np.einsum("bclk,ock->bol", win, w.data, optimize=True)
    if bias is not None:
        data = data + bias.data[:, None]
    l_out = data.shape[2]

    parents = (x, w) if bias is None else (x, w, bias)

    def vjp(g):
        gw = np.einsum("bol,bclk->ock", g, win, optimize=True)
        gxp = np.zeros_like(xp)
        gwin = np.einsum("bol,ock->bclk", g, w.data, optimize=True)
        for k in range(K):
            gxp[:, :, k:k + (l_out - 1) * stride + 1:stride] += gwin[:, :, :, k]
        gx = gxp[:, :, padding:padding + x.shape[2]] if padding else gxp
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2))

    return _from_op(data, parents, vjp, "conv1d")


def conv2d(x, w, bias=None, stride=(1, 1), padding=(0, 0)):
    """2-D convolution.

    Parameters
    ----------
    x : Tensor, shape (B, C_in, H, W)
    w : Tensor, shape (C_out, C_in, KH, KW)
    """
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d: expected (B,C,H,W) and (O,C,KH,KW), got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d: channel mismatch, input {x.shape} vs kernel {w.shape}")
    sh, sw = stride
    ph, pw = padding
    kh, kw = w.shape[2], w.shape[3]
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x.data
    if xp.shape[2] < kh or xp.shape[3] < kw:
        raise ShapeError(f"conv2d: kernel ({kh},{kw}) larger than padded input {xp.shape[2:]}")
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    data = np.einsum("bchwij,ocij->bohw", win, w.data, optimize=True)
    if bias is not None:
        data = data + bias.data[:, None, None]
    h_out, w_out = data.shape[2], data.shape[3]

    parents = (x, w) if bias is None else (x, w, bias)

    def vjp(g):
        gw = np.einsum("bohw,bchwij->ocij", g, win, optimize=True)
        gxp = np.zeros_like(xp)
        gwin = np.einsum("bohw,ocij->bchwij", g, w.data, optimize=True)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i:i + (h_out - 1) * sh + 1:sh, j:j + (w_out - 1) * sw + 1:sw] += gwin[:, :, :, :, i, j]
        gx = gxp[:, :, ph:ph + x.shape[2], pw:pw + x.shape[3]] if (ph or pw) else gxp
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    return _from_op(data, parents, vjp, "conv2d")


def maxpool1d(x, kernel, stride=None):
    """Max pooling over the last axis, remembering argmax positions."""
    stride = kernel if stride is None else stride
    if x.shape[-1] < kernel:
        raise ShapeError(f"maxpool1d: kernel {kernel} longer than axis {x.shape[-1]}")
    win = sliding_window_view(x.data, kernel, axis=-1)[..., ::stride, :]
    data = win.max(axis=-1)
    arg = win.argmax(axis=-1)
    l_out = data.shape[-1]
    pos = arg + np.arange(l_out) * stride  # source index on the last axis

    def vjp(g):
        gx = np.zeros_like(x.data)
        lead = x.data.shape[:-1]
        gxf = gx.reshape(-1, x.data.shape[-1])
        posf = pos.reshape(-1, l_out)
        gf = g.reshape(-1, l_out)
        rows = np.arange(gxf.shape[0])[:, None]
        np.add.at(gxf, (rows, posf), gf)
        return (gxf.reshape(lead + (x.data.shape[-1],)),)

    return _from_op(data, (x,), vjp, "maxpool1d")


# --------------------------------------------------------------------------
# softmax family
# --------------------------------------------------------------------------

def softmax(a, axis=-1):
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        return ((g - dot) * data,)

    return _from_op(data, (a,), vjp, "softmax")


def log_softmax(a, axis=-1):
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    data = shifted - lse
    sm = np.exp(data)

    def vjp(g):
        return (g - sm * g.sum(axis=axis, keepdims=True),)

    return _from_op(data, (a,), vjp, "log_softmax")


def masked_softmax(a, mask, axis=-1):
    """Softmax restricted to ``mask`` (a constant 0/1 array); masked-out
    entries get exactly zero weight.  Rows must have at least one live entry.
    """
    m = np.asarray(mask, dtype=bool)
    if m.shape != a.data.shape:
        raise ShapeError(f"masked_softmax: mask shape {m.shape} != input shape {a.data.shape}")
    neg = np.where(m, a.data, -np.inf)
    shifted = neg - neg.max(axis=axis, keepdims=True)
    e = np.where(m, np.exp(shifted), 0.0)
    total = e.sum(axis=axis, keepdims=True)
    if np.any(total == 0):
        raise ValueError("masked_softmax: a row has no unmasked entries")
    data = (e / total).astype(a.dtype)

    def vjp(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        return (((g - dot) * data).astype(a.dtype),)

    return _from_op(data, (a,), vjp, "masked_softmax")


# --------------------------------------------------------------------------
# band (diagonal) embedding and extraction
# --------------------------------------------------------------------------

def band_embed(diagonals, n):
    """Assemble a symmetric banded matrix from off-diagonal values.

    ``diagonals[d-1]`` holds the values for offset ``d`` (d = 1..len) with
    shape (..., n-d).  The result has shape (..., n, n), a zero main
    diagonal, and entries mirrored across it.
    """
    diagonals = list(diagonals)
    if not diagonals:
        raise ShapeError("band_embed: need at least one diagonal")
    lead = diagonals[0].data.shape[:-1]
    for d, t in enumerate(diagonals, start=1):
        if t.data.shape != lead + (n - d,):
            raise ShapeError(
                f"band_embed: diagonal {d} has shape {t.data.shape}, expected {lead + (n - d,)}")
    dtype = diagonals[0].dtype
    data = np.zeros(lead + (n, n), dtype=dtype)
    for d, t in enumerate(diagonals, start=1):
        idx = np.arange(n - d)
        data[..., idx, idx + d] = t.data
        data[..., idx + d, idx] = t.data

    def vjp(g):
        grads = []
        for d in range(1, len(diagonals) + 1):
            idx = np.arange(n - d)
            grads.append(g[..., idx, idx + d] + g[..., idx + d, idx])
        return tuple(grads)

    return _from_op(data, tuple(diagonals), vjp, "band_embed")


def band_diagonal(a, d):
    """Extract the offset-``d`` diagonal of (..., n, n) as (..., n-d)."""
    n = a.shape[-1]
    if a.ndim < 2 or a.shape[-2] != n:
        raise ShapeError(f"band_diagonal: expected square trailing axes, got {a.shape}")
    if not 0 <= d < n:
        raise ShapeError(f"band_diagonal: offset {d} out of range for n={n}")
    idx = np.arange(n - d)
    data = a.data[..., idx, idx + d]

    def vjp(g):
        gx = np.zeros_like(a.data)
        gx[..., idx, idx + d] += g
        return (gx,)

    return _from_op(data, (a,), vjp, "band_diagonal")


# --------------------------------------------------------------------------
# gradient checking
# --------------------------------------------------------------------------

@dataclass
class GradCheckResult:
    """Outcome of a finite-difference check.

    ``per_input`` maps input names to their max relative error; entries whose
    analytic and numeric gradients are both below 1e-6 compare absolutely
    against that floor.
    """
    passed: bool
    max_rel_err: float
    per_input: dict
    eps: float
    tol: float

    def __str__(self):
        verdict = "PASS" if self.passed else "FAIL"
        worst = max(self.per_input, key=self.per_input.get) if self.per_input else "-"
        return f"grad_check {verdict}: max rel err {self.max_rel_err:.3e} (worst: {worst}, tol {self.tol:g})"


def grad_check(fn, inputs, eps=1e-5, tol=1e-4, names=None):
    """Compare analytic gradients of ``fn`` against central finite differences.

    Parameters
    ----------
    fn : callable(*inputs) -> scalar Tensor
    inputs : sequence of Tensor; those with ``requires_grad`` are checked.
        Must be float64 (finite differences at eps=1e-5 are meaningless in
        float32).
    eps : half-width of the central difference step.
    tol : max allowed relative error.
    """
    inputs = list(inputs)
    if names is None:
        names = [f"input{i}" for i in range(len(inputs))]
    checked = [(nm, t) for nm, t in zip(names, inputs) if t.requires_grad]
    for nm, t in checked:
        if t.dtype != np.float64:
            raise ValueError(f"grad_check: input {nm} must be float64, got {t.dtype}")
        t.zero_grad()

    out = fn(*inputs)
    if not isinstance(out, Tensor) or out.data.size != 1:
        raise ValueError("grad_check: function must return a scalar Tensor")
    out.backward()

    analytic = {nm: (np.zeros_like(t.data) if t.grad is None else t.grad.copy()) for nm, t in checked}

    per_input = {}
    floor = 1e-6
    for nm, t in checked:
        an = analytic[nm].reshape(-1)
        worst = 0.0
        # index through the original array: reshape(-1) would copy (and the
        # perturbation would be lost) whenever the data is a strided view
        for i in range(t.data.size):
            idx = np.unravel_index(i, t.data.shape)
            keep = t.data[idx]
            t.data[idx] = keep + eps
            hi = float(fn(*inputs).data)
            t.data[idx] = keep - eps
            lo = float(fn(*inputs).data)
            t.data[idx] = keep
            fd = (hi - lo) / (2.0 * eps)
            denom = max(abs(fd), abs(an[i]), floor)
            worst = max(worst, abs(fd - an[i]) / denom)
        per_input[nm] = worst

    max_err = max(per_input.values()) if per_input else 0.0
    return GradCheckResult(passed=max_err < tol, max_rel_err=max_err,
                           per_input=per_input, eps=eps, tol=tol)
