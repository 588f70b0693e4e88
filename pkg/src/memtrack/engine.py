"""Dense tensor engine with reverse-mode differentiation.

Tensors wrap float32 numpy arrays (float64 when a sharper numeric check is
wanted, e.g. inside ``grad_check``).  Operations record their inputs and a
backward closure on the output tensor; ``backward`` replays the implicit
graph in reverse topological order.  Values are treated as immutable once
created, so several graphs may safely share the same parameter leaves.

Non-differentiable points follow subgradient conventions: relu'(0) = 0,
argmin/argmax selections are constants, and the max() in the guarded cosine
denominator picks the active branch.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

EPS_COSINE = 1e-8   # zero-norm guard for cosine similarity
EPS_LNORM = 1e-5    # variance floor for layer normalization


class ShapeError(ValueError):
    """Operands violate an operation's shape contract."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference / constants)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=np.float32):
        arr = np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(dtype)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._backward = None

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
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)

    def zero_grad(self):
        self.grad = None

    def backward(self, leaves: Iterable["Tensor"] | None = None):
        backward(self, leaves)

    def sum(self) -> "Tensor":
        return tsum(self)

    def mean(self) -> "Tensor":
        return tmean(self)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def __add__(self, other):
        return add(self, _lift(other, self.dtype))

    def __sub__(self, other):
        return sub(self, _lift(other, self.dtype))

    def __mul__(self, other):
        return mul(self, _lift(other, self.dtype))

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def _lift(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _node(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable | None) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _accum(t: Tensor, g: np.ndarray):
    if t.grad is None:
        t.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient over axes that numpy broadcasting expanded."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise operations

def _binary_check(a: Tensor, b: Tensor):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"incompatible operand shapes {a.shape} and {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _binary_check(a, b)
    out_data = a.data + b.data

    def bw(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g, b.shape))

    return _node(out_data, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _binary_check(a, b)
    out_data = a.data - b.data

    def bw(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(-g, b.shape))

    return _node(out_data, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _binary_check(a, b)
    out_data = a.data * b.data

    def bw(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.shape))

    return _node(out_data, (a, b), bw)


def scale(a: Tensor, k: float) -> Tensor:
    k = float(k)
    out_data = a.data * k

    def bw(g):
        if a.requires_grad:
            _accum(a, g * k)

    return _node(out_data, (a,), bw)


def add_const(a: Tensor, k: float) -> Tensor:
    out_data = a.data + float(k)

    def bw(g):
        if a.requires_grad:
            _accum(a, g)

    return _node(out_data, (a,), bw)


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)

    def bw(g):
        if a.requires_grad:
            _accum(a, g * (1.0 - y * y))

    return _node(y, (a,), bw)


def sigmoid(a: Tensor) -> Tensor:
    # stable for both signs
    y = np.where(a.data >= 0, 1.0 / (1.0 + np.exp(-np.abs(a.data))),
                 np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))))
    y = y.astype(a.data.dtype)

    def bw(g):
        if a.requires_grad:
            _accum(a, g * y * (1.0 - y))

    return _node(y, (a,), bw)


def relu(a: Tensor) -> Tensor:
    y = np.maximum(a.data, 0)

    def bw(g):
        if a.requires_grad:
            _accum(a, g * (a.data > 0))

    return _node(y, (a,), bw)


def softplus(a: Tensor) -> Tensor:
    y = np.logaddexp(0.0, a.data).astype(a.data.dtype)

    def bw(g):
        if a.requires_grad:
            s = np.where(a.data >= 0, 1.0 / (1.0 + np.exp(-np.abs(a.data))),
                         np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))))
            _accum(a, g * s)

    return _node(y, (a,), bw)


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "relu": relu,
    "softplus": softplus,
}


def elementwise(kind: str, *inputs: Tensor) -> Tensor:
    """Dispatch on the elementwise kind; binary kinds require equal shapes."""
    fn = _ELEMENTWISE.get(kind)
    if fn is None:
        raise ValueError(f"unknown elementwise kind {kind!r}")
    if kind in ("add", "sub", "mul"):
        a, b = inputs
        if a.shape != b.shape:
            raise ShapeError(f"{kind} requires equal shapes, got {a.shape} and {b.shape}")
        return fn(a, b)
    (a,) = inputs
    return fn(a)


# ---------------------------------------------------------------------------
# linear algebra and shape ops

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim not in (1, 2) or b.ndim not in (1, 2):
        raise ShapeError(f"matmul expects 1-D or 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def bw(g):
        ad, bd = a.data, b.data
        if a.ndim == 2 and b.ndim == 2:
            if a.requires_grad:
                _accum(a, g @ bd.T)
            if b.requires_grad:
                _accum(b, ad.T @ g)
        elif a.ndim == 2 and b.ndim == 1:
            if a.requires_grad:
                _accum(a, np.outer(g, bd))
            if b.requires_grad:
                _accum(b, ad.T @ g)
        elif a.ndim == 1 and b.ndim == 2:
            if a.requires_grad:
                _accum(a, bd @ g)
            if b.requires_grad:
                _accum(b, np.outer(ad, g))
        else:  # 1-D dot 1-D -> scalar
            if a.requires_grad:
                _accum(a, g * bd)
            if b.requires_grad:
                _accum(b, g * ad)

    return _node(out_data, (a, b), bw)


def reshape(a: Tensor, shape: tuple) -> Tensor:
    out_data = a.data.reshape(shape)

    def bw(g):
        if a.requires_grad:
            _accum(a, g.reshape(a.shape))

    return _node(out_data, (a,), bw)


def transpose2d(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeError(f"transpose2d expects a matrix, got shape {a.shape}")
    out_data = np.ascontiguousarray(a.data.T)

    def bw(g):
        if a.requires_grad:
            _accum(a, g.T)

    return _node(out_data, (a,), bw)


def concat1d(parts: Sequence[Tensor]) -> Tensor:
    flats = [p.data.reshape(-1) for p in parts]
    out_data = np.concatenate(flats)
    sizes = [f.size for f in flats]

    def bw(g):
        off = 0
        for p, n in zip(parts, sizes):
            if p.requires_grad:
                _accum(p, g[off:off + n].reshape(p.shape))
            off += n

    return _node(out_data, tuple(parts), bw)


def slice1d(a: Tensor, start: int, stop: int) -> Tensor:
    if a.ndim != 1:
        raise ShapeError(f"slice1d expects a vector, got shape {a.shape}")
    out_data = a.data[start:stop]

    def bw(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[start:stop] = g
            _accum(a, full)

    return _node(out_data, (a,), bw)


def tsum(a: Tensor) -> Tensor:
    out_data = a.data.sum()

    def bw(g):
        if a.requires_grad:
            _accum(a, np.broadcast_to(g, a.shape).astype(a.data.dtype))

    return _node(out_data, (a,), bw)


def tmean(a: Tensor) -> Tensor:
    n = a.size
    out_data = a.data.mean()

    def bw(g):
        if a.requires_grad:
            _accum(a, np.broadcast_to(g / n, a.shape).astype(a.data.dtype))

    return _node(out_data, (a,), bw)


def mean_axes(a: Tensor, axes: tuple) -> Tensor:
    axes = tuple(axes)
    out_data = a.data.mean(axis=axes)
    count = 1
    for ax in axes:
        count *= a.shape[ax]

    def bw(g):
        if a.requires_grad:
            ge = np.expand_dims(g, axes)
            _accum(a, np.broadcast_to(ge / count, a.shape).astype(a.data.dtype))

    return _node(out_data, (a,), bw)


# ---------------------------------------------------------------------------
# normalizations and regularizers

def softmax(a: Tensor) -> Tensor:
    if a.ndim != 1 or a.size == 0:
        raise ShapeError(f"softmax expects a nonempty vector, got shape {a.shape}")
    z = a.data - a.data.max()
    e = np.exp(z)
    y = e / e.sum()

    def bw(g):
        if a.requires_grad:
            _accum(a, y * (g - np.dot(g, y)))

    return _node(y, (a,), bw)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor) -> Tensor:
    if a.ndim != 1 or a.size < 2:
        raise ShapeError(f"layer_norm expects a vector of length >= 2, got shape {a.shape}")
    mu = a.data.mean()
    var = a.data.var()
    inv = 1.0 / np.sqrt(var + EPS_LNORM)
    xhat = (a.data - mu) * inv
    out_data = gain.data * xhat + bias.data

    def bw(g):
        if bias.requires_grad:
            _accum(bias, g)
        if gain.requires_grad:
            _accum(gain, g * xhat)
        if a.requires_grad:
            gh = g * gain.data
            n = a.size
            da = inv * (gh - gh.mean() - xhat * (gh * xhat).mean())
            _accum(a, da.astype(a.data.dtype))

    return _node(out_data, (a, gain, bias), bw)


def dropout(a: Tensor, keep_prob: float, training: bool, rng: np.random.Generator) -> Tensor:
    if not 0.0 < keep_prob <= 1.0:
        raise ValueError(f"keep_prob must be in (0, 1], got {keep_prob}")
    if not training or keep_prob == 1.0:
        return a if isinstance(a, Tensor) and a._backward is not None else _identity(a)
    mask = (rng.random(a.shape) < keep_prob).astype(a.data.dtype) / keep_prob
    out_data = a.data * mask

    def bw(g):
        if a.requires_grad:
            _accum(a, g * mask)

    return _node(out_data, (a,), bw)


def _identity(a: Tensor) -> Tensor:
    def bw(g):
        if a.requires_grad:
            _accum(a, g)

    return _node(a.data, (a,), bw)


# ---------------------------------------------------------------------------
# similarity

def cosine_similarity(x: Tensor, y: Tensor) -> Tensor:
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise ShapeError(f"cosine_similarity expects equal-length vectors, got {x.shape} and {y.shape}")
    nx = np.linalg.norm(x.data)
    ny = np.linalg.norm(y.data)
    denom = max(nx * ny, EPS_COSINE)
    dot = np.dot(x.data, y.data)
    c = dot / denom
    out_data = np.asarray(c, dtype=x.data.dtype)

    def bw(g):
        guarded = nx * ny <= EPS_COSINE
        if x.requires_grad:
            if guarded:
                dx = y.data / denom
            else:
                dx = y.data / denom - c * x.data / (nx * nx)
            _accum(x, (g * dx).astype(x.data.dtype))
        if y.requires_grad:
            if guarded:
                dy = x.data / denom
            else:
                dy = x.data / denom - c * y.data / (ny * ny)
            _accum(y, (g * dy).astype(y.data.dtype))

    return _node(out_data, (x, y), bw)


def row_cosine(m: Tensor, k: Tensor) -> Tensor:
    """Cosine similarity of each row of m against k; same guard as the scalar op."""
    if m.ndim != 2 or k.ndim != 1 or m.shape[1] != k.shape[0]:
        raise ShapeError(f"row_cosine expects (N,d) and (d,), got {m.shape} and {k.shape}")
    row_norms = np.linalg.norm(m.data, axis=1)
    kn = np.linalg.norm(k.data)
    denom = np.maximum(row_norms * kn, EPS_COSINE)
    dots = m.data @ k.data
    c = (dots / denom).astype(m.data.dtype)

    def bw(g):
        guarded = row_norms * kn <= EPS_COSINE
        if m.requires_grad:
            dm = g[:, None] * (k.data[None, :] / denom[:, None])
            safe = ~guarded & (row_norms > 0)
            dm[safe] -= (g[safe] * c[safe] / (row_norms[safe] ** 2))[:, None] * m.data[safe]
            _accum(m, dm.astype(m.data.dtype))
        if k.requires_grad:
            dk = (g / denom) @ m.data
            if not np.all(guarded) and kn > 0:
                dk -= np.dot(g[~guarded], c[~guarded]) * k.data / (kn * kn)
            _accum(k, dk.astype(k.data.dtype))

    return _node(c, (m, k), bw)


# ---------------------------------------------------------------------------
# spatial ops on (h, w, c) maps

def _window_cols(x: np.ndarray, kh: int, kw: int, stride: int):
    """im2col: (h,w,c) -> (h', w', kh*kw*c) with row-major (kh, kw, c) flattening."""
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(0, 1))
    win = win[::stride, ::stride]                    # (h', w', c, kh, kw)
    win = np.ascontiguousarray(win.transpose(0, 1, 3, 4, 2))  # (h', w', kh, kw, c)
    hh, ww = win.shape[:2]
    return win.reshape(hh, ww, kh * kw * x.shape[2]), hh, ww


def _scatter_cols(dcols: np.ndarray, x_shape: tuple, kh: int, kw: int, stride: int) -> np.ndarray:
    """col2im: accumulate window-column gradients back onto the input map."""
    hh, ww = dcols.shape[:2]
    dwin = dcols.reshape(hh, ww, kh, kw, x_shape[2])
    dx = np.zeros(x_shape, dtype=dcols.dtype)
    for i in range(kh):
        for j in range(kw):
            dx[i:i + stride * hh:stride, j:j + stride * ww:stride] += dwin[:, :, i, j, :]
    return dx


def avg_pool(a: Tensor, window: int, stride: int | None = None) -> Tensor:
    """Mean over window x window patches per channel; stride defaults to the window."""
    if a.ndim != 3:
        raise ShapeError(f"avg_pool expects (h, w, c), got shape {a.shape}")
    h, w, _ = a.shape
    if window > h or window > w:
        raise ShapeError(f"pool window {window} exceeds spatial dims {h}x{w}")
    s = window if stride is None else stride
    win = np.lib.stride_tricks.sliding_window_view(a.data, (window, window), axis=(0, 1))
    out_data = win[::s, ::s].mean(axis=(3, 4))
    hh, ww = out_data.shape[:2]
    nsq = window * window

    def bw(g):
        if not a.requires_grad:
            return
        dx = np.zeros_like(a.data)
        gs = g / nsq
        for i in range(window):
            for j in range(window):
                dx[i:i + s * hh:s, j:j + s * ww:s] += gs
        _accum(a, dx)

    return _node(out_data, (a,), bw)


def max_pool(a: Tensor, window: int, stride: int | None = None) -> Tensor:
    if a.ndim != 3:
        raise ShapeError(f"max_pool expects (h, w, c), got shape {a.shape}")
    h, w, c = a.shape
    if window > h or window > w:
        raise ShapeError(f"pool window {window} exceeds spatial dims {h}x{w}")
    s = window if stride is None else stride
    win = np.lib.stride_tricks.sliding_window_view(a.data, (window, window), axis=(0, 1))
    win = win[::s, ::s]                      # (h', w', c, kh, kw)
    hh, ww = win.shape[:2]
    flat = win.reshape(hh, ww, c, window * window)
    arg = flat.argmax(axis=3)
    out_data = np.take_along_axis(flat, arg[..., None], axis=3)[..., 0]

    def bw(g):
        if not a.requires_grad:
            return
        dx = np.zeros_like(a.data)
        ii, jj, cc = np.meshgrid(np.arange(hh), np.arange(ww), np.arange(c), indexing="ij")
        ri = ii * s + arg // window
        rj = jj * s + arg % window
        np.add.at(dx, (ri.ravel(), rj.ravel(), cc.ravel()), g.ravel())
        _accum(a, dx)

    return _node(out_data, (a,), bw)


def conv2d(a: Tensor, kernels: Tensor, stride: int = 1) -> Tensor:
    """Valid (no padding) convolution of (h,w,cin) with (kh,kw,cin,cout)."""
    if a.ndim != 3 or kernels.ndim != 4:
        raise ShapeError(f"conv2d expects (h,w,cin) and (kh,kw,cin,cout), got {a.shape} and {kernels.shape}")
    kh, kw, cin, cout = kernels.shape
    h, w, ca = a.shape
    if ca != cin:
        raise ShapeError(f"kernel channels {cin} do not match input channels {ca}")
    if kh > h or kw > w:
        raise ShapeError(f"kernel {kh}x{kw} larger than input {h}x{w}")
    cols, hh, ww = _window_cols(a.data, kh, kw, stride)
    kmat = kernels.data.reshape(kh * kw * cin, cout)
    out_data = (cols.reshape(hh * ww, -1) @ kmat).reshape(hh, ww, cout)

    def bw(g):
        gf = g.reshape(hh * ww, cout)
        if kernels.requires_grad:
            dk = cols.reshape(hh * ww, -1).T @ gf
            _accum(kernels, dk.reshape(kernels.shape))
        if a.requires_grad:
            dcols = (gf @ kmat.T).reshape(hh, ww, -1)
            _accum(a, _scatter_cols(dcols, a.shape, kh, kw, stride))

    return _node(out_data, (a, kernels), bw)


def cross_correlate(search: Tensor, template: Tensor) -> Tensor:
    """Slide the template over the search map; each cell is the full inner product."""
    if search.ndim != 3 or template.ndim != 3:
        raise ShapeError("cross_correlate expects (h,w,c) search and (n,n,c) template")
    if search.shape[2] != template.shape[2]:
        raise ShapeError(f"channel mismatch: search {search.shape[2]} vs template {template.shape[2]}")
    n0, n1, _ = template.shape
    if n0 > search.shape[0] or n1 > search.shape[1]:
        raise ShapeError("template larger than search map")
    cols, hh, ww = _window_cols(search.data, n0, n1, 1)
    tf = template.data.reshape(-1)
    out_data = (cols.reshape(hh * ww, -1) @ tf).reshape(hh, ww)

    def bw(g):
        gf = g.reshape(-1)
        if template.requires_grad:
            dt = cols.reshape(hh * ww, -1).T @ gf
            _accum(template, dt.reshape(template.shape))
        if search.requires_grad:
            dcols = np.outer(gf, tf).reshape(hh, ww, -1)
            _accum(search, _scatter_cols(dcols, search.shape, n0, n1, 1))

    return _node(out_data, (search, template), bw)


# ---------------------------------------------------------------------------
# backward pass and gradient verification

def backward(loss: Tensor, leaves: Iterable[Tensor] | None = None):
    """Reverse-mode pass from a scalar loss.

    Every reachable requires_grad tensor accumulates into ``.grad``; leaves
    passed explicitly are guaranteed a (possibly zero) gradient even when the
    graph never touched them.
    """
    if loss.shape != ():
        raise ShapeError(f"backward requires a scalar loss, got shape {loss.shape}")

    topo: list[Tensor] = []
    visited = set()
    stack = [(loss, False)]
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
            if id(p) not in visited and p.requires_grad:
                stack.append((p, False))

    loss.grad = np.ones((), dtype=loss.data.dtype)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)

    if leaves is not None:
        for leaf in leaves:
            if leaf.requires_grad and leaf.grad is None:
                leaf.grad = np.zeros_like(leaf.data)


def grad_check(fn: Callable[[list[Tensor]], Tensor], inputs: Sequence[Tensor],
               eps: float = 1e-3) -> float:
    """Max relative error between reverse-mode and central finite differences.

    The graph builder ``fn`` is re-run in float64 so the finite-difference
    oracle is not limited by float32 rounding.  Relative error per coordinate
    is |g_ad - g_fd| / max(1e-6, |g_ad| + |g_fd|).
    """
    base = [t.astype(np.float64) for t in inputs]
    for t in base:
        t.requires_grad = True
    loss = fn(base)
    backward(loss, leaves=base)
    grads = [t.grad.copy() for t in base]

    def eval_loss(tensors):
        with_grad = [Tensor(t, dtype=np.float64) for t in tensors]
        return float(fn(with_grad).data)

    worst = 0.0
    for idx, t in enumerate(base):
        flat = t.data.reshape(-1)
        gflat = grads[idx].reshape(-1)
        for coord in range(flat.size):
            orig = flat[coord]
            flat[coord] = orig + eps
            up = eval_loss([b.data for b in base])
            flat[coord] = orig - eps
            down = eval_loss([b.data for b in base])
            flat[coord] = orig
            fd = (up - down) / (2.0 * eps)
            ad = gflat[coord]
            err = abs(ad - fd) / max(1e-6, abs(ad) + abs(fd))
            if err > worst:
                worst = err
    return worst


def zero_grads(tensors: Iterable[Tensor]):
    for t in tensors:
        t.grad = None


def assert_finite(t: Tensor, what: str = "tensor"):
    if not np.all(np.isfinite(t.data)):
        raise FloatingPointError(f"{what} contains non-finite values")
