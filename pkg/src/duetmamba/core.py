"""Dense-array numerics with tape-based reverse-mode differentiation.

Tensors wrap numpy arrays and record the operations applied to them; calling
``backward`` on a scalar walks the recorded graph in reverse topological order
and accumulates gradients on every reachable leaf. The op set is deliberately
small: exactly what the layers in this package need, nothing more.

Default precision is float64 so finite-difference checks have headroom; a
float32 mode exists for benchmarks (see ``use_dtype``).
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand dimensions are incompatible."""


class ConfigError(ValueError):
    """An option or hyperparameter is outside its supported range."""


class UsageError(RuntimeError):
    """An API was called in an unsupported way (e.g. backward on a non-scalar)."""


class DataError(ValueError):
    """Input data violates a documented contract."""


_DEFAULT_DTYPE = np.float64
_GRAD_ENABLED = True
_CHECK_FINITE = False


def default_dtype():
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def use_dtype(dtype):
    """Temporarily switch the default float dtype (float32 for benchmarks)."""
    global _DEFAULT_DTYPE
    prev = _DEFAULT_DTYPE
    _DEFAULT_DTYPE = np.dtype(dtype).type
    try:
        yield
    finally:
        _DEFAULT_DTYPE = prev


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (sampling, benchmarks)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


@contextlib.contextmanager
def debug_check_finite():
    """Assert every op output is finite (debug builds / targeted tests)."""
    global _CHECK_FINITE
    prev = _CHECK_FINITE
    _CHECK_FINITE = True
    try:
        yield
    finally:
        _CHECK_FINITE = prev


class Tensor:
    """A dense array plus an optional gradient buffer and tape record."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _vjp=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if arr.dtype != _DEFAULT_DTYPE:
            arr = arr.astype(_DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._vjp = _vjp

    # -- introspection -------------------------------------------------
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

    def item(self) -> float:
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    # -- operator sugar ------------------------------------------------
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

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return pow_const(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def swapaxes(self, a, b):
        return swapaxes(self, a, b)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def backward(self):
        backward(self)


class Parameter(Tensor):
    """A trainable Tensor with a dotted-path name assigned by its model."""

    __slots__ = ("name",)

    def __init__(self, data, name: str = ""):
        super().__init__(data, requires_grad=True)
        self.name = name


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient over the axes numpy broadcast when producing it."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _node(data: np.ndarray, parents: Sequence[Tensor], vjp: Callable) -> Tensor:
    if _CHECK_FINITE and not np.all(np.isfinite(data)):
        raise DataError("non-finite value produced by a forward operation")
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=tuple(parents), _vjp=vjp)
    return Tensor(data)


# -- arithmetic ---------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(out, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _node(out, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _node(out, (a, b), vjp)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def vjp(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return _node(out, (a, b), vjp)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _node(-a.data, (a,), lambda g: (-g,))


def pow_const(a, p: float) -> Tensor:
    a = as_tensor(a)
    out = a.data ** p

    def vjp(g):
        return (g * p * a.data ** (p - 1),)

    return _node(out, (a,), vjp)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data @ b.data
    except ValueError as e:
        raise ShapeError(f"matmul mismatch: {a.shape} @ {b.shape}") from e

    def vjp(g):
        ga = gb = None
        if a.requires_grad:
            if b.ndim == 2:
                ga = g @ b.data.T
            else:
                ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        if b.requires_grad:
            if b.ndim == 2:
                a2 = a.data.reshape(-1, a.shape[-1]) if a.ndim > 1 else a.data[None, :]
                g2 = g.reshape(-1, g.shape[-1]) if g.ndim > 1 else g[None, :]
                gb = a2.T @ g2
            else:
                gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return _node(out, (a, b), vjp)


# -- shape ops ----------------------------------------------------------


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = a.data.reshape(shape)

    def vjp(g):
        return (g.reshape(a.shape),)

    return _node(out, (a,), vjp)


def swapaxes(a, i: int, j: int) -> Tensor:
    a = as_tensor(a)
    out = np.swapaxes(a.data, i, j)

    def vjp(g):
        return (np.swapaxes(g, i, j),)

    return _node(out, (a,), vjp)


def broadcast_to(a, shape) -> Tensor:
    a = as_tensor(a)
    out = np.broadcast_to(a.data, shape).copy()

    def vjp(g):
        return (_unbroadcast(g, a.shape),)

    return _node(out, (a,), vjp)


def concat(tensors: Iterable[Tensor], axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in ts], axis=axis)
    sizes = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def vjp(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _node(out, ts, vjp)


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)
    out = a.data[idx]

    def vjp(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx, g)
        return (ga,)

    return _node(out, (a,), vjp)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup with scatter-add backward (label/condition tables)."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    out = table.data[ids]

    def vjp(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    return _node(out, (table,), vjp)


# -- reductions ---------------------------------------------------------


def _expand_reduced(g: np.ndarray, shape, axis, keepdims) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g, shape).copy()
    axes = axis if isinstance(axis, tuple) else (axis,)
    axes = tuple(a % len(shape) for a in axes)
    if not keepdims:
        for a in sorted(axes):
            g = np.expand_dims(g, a)
    return np.broadcast_to(g, shape).copy()


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        return (_expand_reduced(g, a.shape, axis, keepdims),)

    return _node(out, (a,), vjp)


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    n = a.size / max(out.size, 1)

    def vjp(g):
        return (_expand_reduced(g, a.shape, axis, keepdims) / n,)

    return _node(out, (a,), vjp)


# -- elementwise nonlinearities ------------------------------------------


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)

    def vjp(g):
        return (g * out,)

    return _node(out, (a,), vjp)


def log(a) -> Tensor:
    a = as_tensor(a)
    out = np.log(a.data)

    def vjp(g):
        return (g / a.data,)

    return _node(out, (a,), vjp)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)

    def vjp(g):
        return (g * 0.5 / out,)

    return _node(out, (a,), vjp)


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    # tanh form: overflow-free for any input, one transcendental pass
    out = np.tanh(x * 0.5)
    out += 1.0
    out *= 0.5
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _sigmoid_np(a.data)

    def vjp(g):
        return (g * out * (1.0 - out),)

    return _node(out, (a,), vjp)


def silu(a) -> Tensor:
    """x * sigmoid(x)."""
    a = as_tensor(a)
    s = _sigmoid_np(a.data)
    out = a.data * s

    def vjp(g):
        return (g * (s + a.data * s * (1.0 - s)),)

    return _node(out, (a,), vjp)


def softplus(a) -> Tensor:
    """log(1 + exp(x)) via logaddexp, exact linear asymptote for large x."""
    a = as_tensor(a)
    out = np.logaddexp(0.0, a.data)

    def vjp(g):
        return (g * _sigmoid_np(a.data),)

    return _node(out, (a,), vjp)


def zoh_phi(u) -> Tensor:
    """phi(u) = (exp(u) - 1) / u with the series branch 1 + u/2 for |u| < 1e-6.

    This is the input-matrix factor of the exact zero-order-hold discretization;
    the series keeps the kernel total and smooth through u = 0.
    """
    u = as_tensor(u)
    x = u.data
    small = np.abs(x) < 1e-6
    den = np.where(small, 1.0, x)
    out = np.where(small, 1.0 + 0.5 * x, np.expm1(x) / den)

    def vjp(g):
        # phi'(u) = phi + (1 - phi)/u, series 1/2 + u/3 + u^2/8 near zero
        tiny = np.abs(x) < 5e-3
        den2 = np.where(tiny, 1.0, x)
        dphi = np.where(tiny, 0.5 + x / 3.0 + x * x / 8.0, out + (1.0 - out) / den2)
        return (g * dphi,)

    return _node(out, (u,), vjp)


# -- structured ops -------------------------------------------------------


def linear(x, weight, bias=None) -> Tensor:
    """y = x @ W + b, broadcasting over leading axes of x."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(
            f"linear: input width {x.shape} does not match weight {weight.shape}"
        )
    squeeze = x.ndim == 1
    xm = reshape(x, (1, -1)) if squeeze else x
    y = matmul(xm, weight)
    if bias is not None:
        y = add(y, bias)
    if squeeze:
        y = reshape(y, (weight.shape[1],))
    return y


def layer_norm(x, gamma=None, beta=None, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    x = as_tensor(x)
    if x.shape[-1] == 0:
        raise ShapeError("layer_norm: empty last axis")
    mu = tmean(x, axis=-1, keepdims=True)
    xc = sub(x, mu)
    var = tmean(mul(xc, xc), axis=-1, keepdims=True)
    inv = pow_const(add(var, eps), -0.5)
    y = mul(xc, inv)
    if gamma is not None:
        y = mul(y, gamma)
    if beta is not None:
        y = add(y, beta)
    return y


def conv_seq(x, kernel, bias=None) -> Tensor:
    """Cross-correlation along the last axis of [B, Cin, L], zero-padded.

    kernel is [Cout, Cin, k] with k in {1, 3}; output length equals L.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    co, ci, k = kernel.shape
    if k not in (1, 3):
        raise ConfigError(f"conv_seq: unsupported kernel size {k} (expected 1 or 3)")
    if x.shape[-2] != ci:
        raise ShapeError(f"conv_seq: {x.shape} has {x.shape[-2]} channels, kernel wants {ci}")
    pad = (k - 1) // 2
    L = x.shape[-1]
    xp = np.pad(x.data, [(0, 0)] * (x.ndim - 1) + [(pad, pad)])
    stack = np.stack([xp[..., j : j + L] for j in range(k)], axis=-2)  # [B, Ci, k, L]
    out = np.einsum("oik,...ikl->...ol", kernel.data, stack, optimize=True)
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data[:, None]

    def vjp(g):
        gx = gk = gb = None
        if x.requires_grad:
            gstack = np.einsum("oik,...ol->...ikl", kernel.data, g, optimize=True)
            gxp = np.zeros_like(xp)
            for j in range(k):
                gxp[..., j : j + L] += gstack[..., j, :]
            gx = gxp[..., pad : pad + L] if pad else gxp
        if kernel.requires_grad:
            gk = np.einsum("...ol,...ikl->oik", g, stack, optimize=True)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=tuple(i for i in range(g.ndim) if i != g.ndim - 2))
        return (gx, gk, gb) if bias is not None else (gx, gk)

    parents = (x, kernel, bias) if bias is not None else (x, kernel)
    return _node(out, parents, vjp)


def dwconv_seq(x, kernel, bias=None) -> Tensor:
    """Depthwise cross-correlation along axis -2 of channel-last [B, T, C].

    kernel is [C, k]; each channel is filtered independently, zero-padded so
    the length T is preserved.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    c, k = kernel.shape
    if k not in (1, 3):
        raise ConfigError(f"dwconv_seq: unsupported kernel size {k}")
    if x.shape[-1] != c:
        raise ShapeError(f"dwconv_seq: {x.shape} vs kernel {kernel.shape}")
    pad = (k - 1) // 2
    T = x.shape[-2]
    padspec = [(0, 0)] * x.ndim
    padspec[-2] = (pad, pad)
    xp = np.pad(x.data, padspec)
    out = np.zeros_like(x.data)
    for j in range(k):
        out += xp[..., j : j + T, :] * kernel.data[:, j]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data

    def vjp(g):
        gx = gk = gb = None
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for j in range(k):
                gxp[..., j : j + T, :] += g * kernel.data[:, j]
            gx = gxp[..., pad : pad + T, :] if pad else gxp
        if kernel.requires_grad:
            gk = np.empty_like(kernel.data)
            lead = tuple(range(g.ndim - 1))
            for j in range(k):
                gk[:, j] = (g * xp[..., j : j + T, :]).sum(axis=lead)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=tuple(range(g.ndim - 1)))
        return (gx, gk, gb) if bias is not None else (gx, gk)

    parents = (x, kernel, bias) if bias is not None else (x, kernel)
    return _node(out, parents, vjp)


# -- linear recurrence (the scan primitive) -------------------------------


def _recur_sequential(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    h = np.empty_like(x)
    acc = np.zeros_like(x[:, 0])
    for t in range(x.shape[1]):
        out = h[:, t]
        np.multiply(a[:, t], acc, out=out)
        out += x[:, t]
        acc = out
    return h


def _recur_blelloch(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Work-efficient up-/down-sweep over the composition (a1,b1)∘(a2,b2) =
    (a2*a1, a2*b1 + b2); pads to a power of two with the identity (1, 0)."""
    T = x.shape[1]
    P = 1 << max(T - 1, 1).bit_length() if T & (T - 1) else T
    if P < T:
        P = T
    A = np.ones((a.shape[0], P) + a.shape[2:], dtype=a.dtype)
    X = np.zeros((x.shape[0], P) + x.shape[2:], dtype=x.dtype)
    A[:, :T] = a
    X[:, :T] = x
    levels = P.bit_length() - 1
    for k in range(levels):
        s = 1 << k
        r = slice(2 * s - 1, P, 2 * s)
        l = slice(s - 1, P, 2 * s)
        X[:, r] = A[:, r] * X[:, l] + X[:, r]
        A[:, r] = A[:, r] * A[:, l]
    A[:, P - 1] = 1.0
    X[:, P - 1] = 0.0
    for k in range(levels - 1, -1, -1):
        s = 1 << k
        r = slice(2 * s - 1, P, 2 * s)
        l = slice(s - 1, P, 2 * s)
        ta = A[:, l].copy()
        tx = X[:, l].copy()
        pa = A[:, r].copy()
        px = X[:, r].copy()
        A[:, l] = pa
        X[:, l] = px
        A[:, r] = ta * pa
        X[:, r] = ta * px + tx
    # (A, X) now hold exclusive prefixes; fold in the element for inclusive h.
    return a * X[:, :T] + x


def _recur_chunked(a: np.ndarray, x: np.ndarray, chunk: int = 64) -> np.ndarray:
    """Sequential scan inside fixed-size chunks (vectorized across chunks),
    sequential composition of chunk summaries, then prefix correction."""
    B, T = x.shape[0], x.shape[1]
    if T <= chunk:
        return _recur_sequential(a, x)
    n = -(-T // chunk)
    P = n * chunk
    if P != T:
        ap = np.ones((B, P) + a.shape[2:], dtype=a.dtype)
        xp = np.zeros((B, P) + x.shape[2:], dtype=x.dtype)
        ap[:, :T] = a
        xp[:, :T] = x
    else:
        ap, xp = np.ascontiguousarray(a), np.ascontiguousarray(x)
    ar = ap.reshape((B, n, chunk) + ap.shape[2:])
    xr = xp.reshape((B, n, chunk) + xp.shape[2:])
    h_local = np.empty_like(xr)
    aprod = np.empty_like(ar)
    acc_h = np.zeros_like(xr[:, :, 0])
    acc_a = np.ones_like(ar[:, :, 0])
    for t in range(chunk):
        out_h = h_local[:, :, t]
        np.multiply(ar[:, :, t], acc_h, out=out_h)
        out_h += xr[:, :, t]
        acc_h = out_h
        out_a = aprod[:, :, t]
        np.multiply(ar[:, :, t], acc_a, out=out_a)
        acc_a = out_a
    carries = np.zeros_like(acc_h)
    carry = np.zeros_like(acc_h[:, 0])
    for c in range(1, n):
        carry = aprod[:, c - 1, -1] * carry + h_local[:, c - 1, -1]
        carries[:, c] = carry
    aprod *= carries[:, :, None]
    h_local += aprod
    return h_local.reshape((B, P) + xp.shape[2:])[:, :T]


_RECUR_KERNELS = {
    "sequential": _recur_sequential,
    "blelloch": _recur_blelloch,
    "chunked": _recur_chunked,
}


def linear_recurrence(a, x, kernel: str = "chunked") -> Tensor:
    """h_t = a_t * h_{t-1} + x_t along axis 1, h_0 = 0, differentiable.

    The adjoint is itself a linear recurrence run in reverse time, so the
    backward pass reuses the same kernel and stays O(T).
    """
    a, x = as_tensor(a), as_tensor(x)
    if a.shape != x.shape:
        raise ShapeError(f"linear_recurrence: {a.shape} vs {x.shape}")
    fn = _RECUR_KERNELS[kernel]
    h = fn(a.data, x.data)

    def vjp(g):
        ash = np.concatenate([a.data[:, 1:], np.ones_like(a.data[:, :1])], axis=1)
        lam = fn(
            np.ascontiguousarray(ash[:, ::-1]), np.ascontiguousarray(g[:, ::-1])
        )[:, ::-1]
        ga = None
        if a.requires_grad:
            hsh = np.concatenate([np.zeros_like(h[:, :1]), h[:, :-1]], axis=1)
            ga = lam * hsh
        gx = lam if x.requires_grad else None
        return ga, gx

    return _node(h, (a, x), vjp)


# -- backward pass --------------------------------------------------------


def backward(loss: Tensor):
    """Populate .grad on every reachable requires_grad leaf of a scalar loss."""
    if loss.size != 1:
        raise UsageError(f"backward expects a scalar, got shape {loss.shape}")
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
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
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._vjp is None or node.grad is None:
            continue
        grads = node._vjp(node.grad)
        for parent, g in zip(node._parents, grads):
            if g is None or not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = g.astype(parent.dtype, copy=True)
            else:
                parent.grad += g
        # interior activations are not needed once their vjp has run
        node.grad = None
        node._vjp = None
        node._parents = ()


# -- module / parameter registry ------------------------------------------


class Module:
    """Minimal container giving dotted-path parameter names and traversal."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = ""):
        for n, p in self._params.items():
            yield prefix + n, p
        for n, m in self._children.items():
            yield from m.named_parameters(prefix + n + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def assign_names(self, prefix: str = ""):
        """Stamp dotted-path names onto parameters; names must be unique."""
        seen = set()
        for name, p in self.named_parameters(prefix):
            if name in seen:
                raise ConfigError(f"duplicate parameter name {name!r}")
            seen.add(name)
            p.name = name
        return self


class ModuleList(Module):
    def __init__(self, mods=()):
        super().__init__()
        self._items = []
        for m in mods:
            self.append(m)

    def append(self, m: Module):
        setattr(self, str(len(self._items)), m)
        self._items.append(m)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng=None, zero_init: bool = False, bias: bool = True):
        super().__init__()
        if zero_init:
            w = np.zeros((d_in, d_out))
        else:
            rng = rng or np.random.default_rng(0)
            w = rng.standard_normal((d_in, d_out)) / np.sqrt(d_in)
        self.weight = Parameter(w.astype(_DEFAULT_DTYPE))
        self.bias = Parameter(np.zeros(d_out, dtype=_DEFAULT_DTYPE)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, width: int, eps: float = 1e-5):
        super().__init__()
        self.gamma = Parameter(np.ones(width, dtype=_DEFAULT_DTYPE))
        self.beta = Parameter(np.zeros(width, dtype=_DEFAULT_DTYPE))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta, self.eps)


def finite_difference_gradients(f, params, h: float = 1e-5):
    """Central-difference gradient of scalar f() w.r.t. each Parameter element.

    The independent oracle for every backward check in this package; it never
    touches the tape.
    """
    grads = []
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f())
            flat[i] = orig - h
            fm = float(f())
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def relative_gradient_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    denom = np.maximum(np.abs(numeric), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))
