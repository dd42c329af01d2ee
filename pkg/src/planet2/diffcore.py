"""Minimal reverse-mode automatic differentiation over dense numpy arrays.

Forward primitives build a tape (a DAG of ``Tensor`` nodes); calling
``Tensor.backward()`` on a scalar output walks the tape once in reverse
topological order and accumulates gradients additively into ``.grad``.

Conventions:
  * arrays are rank <= 3, float64 for tests and training, float32 for fast
    inference;
  * every primitive checks its output for non-finite values unless finite
    checks are disabled (see ``finite_checks``);
  * inside a ``no_grad()`` block no graph is recorded, which makes the same
    forward code usable as a plain inference path.
"""

from __future__ import annotations

import contextlib
import math
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf

from .errors import NumericsError, ShapeError

_MAX_RANK = 3
_GRAD_ENABLED = True
_FINITE_CHECKS = True

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_INV_SQRT_2 = 1.0 / math.sqrt(2.0)


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


@contextlib.contextmanager
def finite_checks(enabled: bool):
    """Toggle per-op non-finite detection (on by default)."""
    global _FINITE_CHECKS
    prev = _FINITE_CHECKS
    _FINITE_CHECKS = enabled
    try:
        yield
    finally:
        _FINITE_CHECKS = prev


class Tensor:
    """A dense array plus the bookkeeping needed for reverse mode."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        if arr.ndim > _MAX_RANK:
            raise ShapeError(f"rank {arr.ndim} exceeds supported rank {_MAX_RANK}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable[[np.ndarray], tuple] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def backward(self) -> None:
        """Accumulate gradients of this scalar output into every ancestor."""
        if self.data.size != 1:
            raise ShapeError("backward() requires a scalar output")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad and node._vjp is None:
                node.grad = g if node.grad is None else node.grad + g
            if node._vjp is None:
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype})"

    # arithmetic sugar
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

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype if dtype is not None else np.float64)
    return Tensor(arr)


def parameter(data) -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)


def _check_finite(arr: np.ndarray, opname: str) -> None:
    if _FINITE_CHECKS and not np.all(np.isfinite(arr)):
        raise NumericsError(f"non-finite value produced by {opname}")


def _result(data: np.ndarray, parents: Sequence[Tensor], vjp, opname: str) -> Tensor:
    if data.ndim > _MAX_RANK:
        raise ShapeError(f"{opname}: rank {data.ndim} exceeds supported rank {_MAX_RANK}")
    _check_finite(data, opname)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    else:
        out.requires_grad = False
        out._parents = ()
        out._vjp = None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# -- elementwise arithmetic ------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(data, (a, b), vjp, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result(data, (a, b), vjp, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result(data, (a, b), vjp, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        data = a.data / b.data

    def vjp(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return _result(data, (a, b), vjp, "div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _result(-a.data, (a,), lambda g: (-g,), "neg")


# -- structural ops --------------------------------------------------------

def matmul(a, b) -> Tensor:
    """np.matmul semantics for operands of rank >= 2 (leading dims broadcast)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError("matmul requires operands of rank >= 2")
    data = np.matmul(a.data, b.data)

    def vjp(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return _result(data, (a, b), vjp, "matmul")


def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.data.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _result(data, ts, vjp, "concat")


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    data = a.data.reshape(shape)

    def vjp(g):
        return (g.reshape(a.shape),)

    return _result(data, (a,), vjp, "reshape")


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    data = np.transpose(a.data, axes)
    if axes is None:
        inv = None
    else:
        inv = np.argsort(axes)

    def vjp(g):
        return (np.transpose(g, inv),)

    return _result(data, (a,), vjp, "transpose")


def broadcast_to(a, shape) -> Tensor:
    a = as_tensor(a)
    data = np.broadcast_to(a.data, shape).copy()

    def vjp(g):
        return (_unbroadcast(g, a.shape),)

    return _result(data, (a,), vjp, "broadcast_to")


def gather_rows(a, index) -> Tensor:
    """Select rows along axis 0; backward scatters gradients back."""
    a = as_tensor(a)
    idx = np.asarray(index, dtype=np.intp)
    data = a.data[idx]

    def vjp(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx, g)
        return (ga,)

    return _result(data, (a,), vjp, "gather_rows")


def scatter_add_rows(a, index, size: int) -> Tensor:
    """out[index[e]] += a[e] over axis 0; backward gathers."""
    a = as_tensor(a)
    idx = np.asarray(index, dtype=np.intp)
    data = np.zeros((size,) + a.data.shape[1:], dtype=a.data.dtype)
    np.add.at(data, idx, a.data)

    def vjp(g):
        return (g[idx],)

    return _result(data, (a,), vjp, "scatter_add_rows")


# -- reductions ------------------------------------------------------------

def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.shape).copy(),)

    return _result(np.asarray(data), (a,), vjp, "sum")


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        n = a.data.size
    else:
        n = a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


# -- nonlinearities --------------------------------------------------------

def leaky_relu(a, slope: float = 0.01) -> Tensor:
    a = as_tensor(a)
    data = np.where(a.data > 0, a.data, slope * a.data)

    def vjp(g):
        return (g * np.where(a.data > 0, 1.0, slope),)

    return _result(data, (a,), vjp, "leaky_relu")


def elu(a, alpha: float = 1.0) -> Tensor:
    a = as_tensor(a)
    ex = np.exp(np.minimum(a.data, 0.0))
    data = np.where(a.data > 0, a.data, alpha * (ex - 1.0))

    def vjp(g):
        return (g * np.where(a.data > 0, 1.0, alpha * ex),)

    return _result(data, (a,), vjp, "elu")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    data = np.where(
        a.data >= 0,
        1.0 / (1.0 + np.exp(-np.abs(a.data))),
        np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))),
    )

    def vjp(g):
        return (g * data * (1.0 - data),)

    return _result(data, (a,), vjp, "sigmoid")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    data = np.tanh(a.data)

    def vjp(g):
        return (g * (1.0 - data * data),)

    return _result(data, (a,), vjp, "tanh")


def texp(a) -> Tensor:
    a = as_tensor(a)
    data = np.exp(a.data)

    def vjp(g):
        return (g * data,)

    return _result(data, (a,), vjp, "exp")


def tlog(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        data = np.log(a.data)

    def vjp(g):
        return (g / a.data,)

    return _result(data, (a,), vjp, "log")


# -- softmax ---------------------------------------------------------------

def masked_softmax(a, mask: np.ndarray, axis: int) -> Tensor:
    """Softmax over ``axis`` restricted to entries where ``mask`` is nonzero.

    Rows with an empty mask produce all zeros (no attention targets).
    ``mask`` is a constant, broadcastable to ``a``.
    """
    a = as_tensor(a)
    m = np.broadcast_to(np.asarray(mask, dtype=bool), a.shape)
    neg_inf = np.array(-np.inf, dtype=a.data.dtype)
    masked = np.where(m, a.data, neg_inf)
    mx = masked.max(axis=axis, keepdims=True)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    e = np.exp(masked - mx)
    e = np.where(m, e, 0.0)
    den = e.sum(axis=axis, keepdims=True)
    safe = np.where(den > 0, den, 1.0)
    data = e / safe

    def vjp(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        return (data * (g - dot),)

    return _result(data, (a,), vjp, "masked_softmax")


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    mx = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - mx)
    data = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        return (data * (g - dot),)

    return _result(data, (a,), vjp, "softmax")


# -- Gaussian kernels ------------------------------------------------------

def gaussian_pdf(d, mu, sigma) -> Tensor:
    """Normal density N(d; mu, sigma); differentiable in all three arguments."""
    d, mu, sigma = as_tensor(d), as_tensor(mu), as_tensor(sigma)
    if np.any(sigma.data <= 0):
        raise NumericsError("gaussian_pdf requires sigma > 0")
    z = (d.data - mu.data) / sigma.data
    data = _INV_SQRT_2PI * np.exp(-0.5 * z * z) / sigma.data

    def vjp(g):
        dd = -data * z / sigma.data
        gd = _unbroadcast(g * dd, d.shape)
        gm = _unbroadcast(-g * dd, mu.shape)
        gs = _unbroadcast(g * data * (z * z - 1.0) / sigma.data, sigma.shape)
        return gd, gm, gs

    return _result(data, (d, mu, sigma), vjp, "gaussian_pdf")


def gaussian_cdf(d, mu, sigma) -> Tensor:
    """Normal CDF P(X <= d) for X ~ N(mu, sigma)."""
    d, mu, sigma = as_tensor(d), as_tensor(mu), as_tensor(sigma)
    if np.any(sigma.data <= 0):
        raise NumericsError("gaussian_cdf requires sigma > 0")
    z = (d.data - mu.data) / sigma.data
    data = 0.5 * (1.0 + erf(z * _INV_SQRT_2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * z * z) / sigma.data

    def vjp(g):
        gd = _unbroadcast(g * pdf, d.shape)
        gm = _unbroadcast(-g * pdf, mu.shape)
        gs = _unbroadcast(-g * pdf * z, sigma.shape)
        return gd, gm, gs

    return _result(data, (d, mu, sigma), vjp, "gaussian_cdf")


# -- layers ----------------------------------------------------------------

def linear(x, weight, bias=None) -> Tensor:
    """x @ weight.T + bias with weight shaped (out_features, in_features)."""
    w = as_tensor(weight)
    out = matmul(as_tensor(x), transpose(w, axes=None) if w.data.ndim == 2 else w)
    if bias is not None:
        out = add(out, bias)
    return out


# -- verification ----------------------------------------------------------

def _central_difference(fn, flat: np.ndarray, i: int, epsilon: float) -> float:
    orig = flat[i]
    flat[i] = orig + epsilon
    f_plus = fn().item()
    flat[i] = orig - epsilon
    f_minus = fn().item()
    flat[i] = orig
    if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
        raise NumericsError("non-finite output at finite-difference probe")
    return (f_plus - f_minus) / (2.0 * epsilon)


def _analytic_grads(fn, params: Sequence[Tensor]) -> list[np.ndarray]:
    for p in params:
        p.grad = None
    out = fn()
    if not np.isfinite(out.data).all():
        raise NumericsError("non-finite output at gradient probe point")
    out.backward()
    return [p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
            for p in params]


def _rel_err(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


def grad_check(fn: Callable[[], Tensor], params: Sequence[Tensor],
               epsilon: float = 1e-5) -> float:
    """Compare reverse-mode gradients of a scalar function against central
    finite differences, coordinate by coordinate.

    Returns the max relative error with denominator
    max(|analytic|, |numeric|, 1e-8). ``fn`` must re-run the forward pass on
    every call and read the current contents of ``params``.
    """
    analytic = _analytic_grads(fn, params)
    worst = 0.0
    with no_grad():
        for p, ana in zip(params, analytic):
            flat = p.data.reshape(-1)
            aflat = ana.reshape(-1)
            for i in range(flat.size):
                numeric = _central_difference(fn, flat, i, epsilon)
                err = _rel_err(aflat[i], numeric)
                if err > worst:
                    worst = err
    return worst


def grad_check_ladder(fn: Callable[[], Tensor], params: Sequence[Tensor],
                      epsilons: Sequence[float] = (1e-4, 1e-3, 1e-2, 0.1, 0.3),
                      accept: float = 1e-5) -> float:
    """Central-difference check with a per-coordinate step-size ladder.

    A single step size cannot condition every coordinate of a deep float64
    composition: coordinates whose true gradient sits at the 1e-8 denominator
    floor (e.g. weights on Gaussian-tail features) need steps large enough to
    lift the secant above the function's own rounding noise, while
    steep coordinates near activation kinks need small steps. Each coordinate
    therefore keeps the best-conditioned estimate along the ladder; a wrong
    analytic gradient disagrees with every rung and still fails.
    Returns the max over coordinates of that per-coordinate best error.
    """
    analytic = _analytic_grads(fn, params)
    worst = 0.0
    with no_grad():
        for p, ana in zip(params, analytic):
            flat = p.data.reshape(-1)
            aflat = ana.reshape(-1)
            for i in range(flat.size):
                best = math.inf
                for eps in epsilons:
                    numeric = _central_difference(fn, flat, i, eps)
                    best = min(best, _rel_err(aflat[i], numeric))
                    if best < accept:
                        break
                if best > worst:
                    worst = best
    return worst
