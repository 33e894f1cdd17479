"""N-D tensors with reverse-mode automatic differentiation on numpy buffers.

Every differentiable operation builds a node in a dynamic graph: the output
tensor keeps references to its parents and a closure that maps the upstream
gradient to per-parent gradients. ``backward`` runs one reverse topological
sweep and accumulates (+=) into the ``grad`` buffers of requires_grad leaves.

Two scalar precisions exist: ``train32`` (default) and ``check64`` for
finite-difference and oracle tests that need tight tolerances.
"""

import math
from contextlib import contextmanager

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .errors import ContractError, ParameterError, ShapeError, StateError

_DTYPES = {"train32": np.float32, "check64": np.float64}
_state = {"mode": "train32", "debug": False}


def set_precision(mode):
    """Select the scalar precision for newly created tensors."""
    if mode not in _DTYPES:
        raise ParameterError(f"unknown precision mode {mode!r}")
    _state["mode"] = mode


def precision_mode():
    return _state["mode"]


def current_dtype():
    return _DTYPES[_state["mode"]]


@contextmanager
def precision(mode):
    """Temporarily switch precision (used by oracle/gradient tests)."""
    prev = _state["mode"]
    set_precision(mode)
    try:
        yield
    finally:
        _state["mode"] = prev


def set_debug_checks(flag):
    """When on, every op output is checked for NaN/Inf."""
    _state["debug"] = bool(flag)


def _check_extents(shape):
    for e in shape:
        if int(e) != e or e < 1:
            raise ShapeError(f"illegal extent {e} in shape {tuple(shape)}")
    return tuple(int(e) for e in shape)


class Tensor:
    """Immutable value node; only ``grad`` is written after construction."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward_fn",
                 "_op", "_backward_done")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(current_dtype())
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward_fn = None
        self._op = "leaf"
        self._backward_done = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op!r}, requires_grad={self.requires_grad})"

    # arithmetic sugar; the named functions below are the real surface
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def apply_op(data, parents, backward_fn, op):
    """Wrap an op result into the graph. Extension point for sibling modules.

    ``backward_fn(grad)`` must return one gradient array (or None) per parent.
    The subgraph is pruned when no parent requires a gradient.
    """
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._op = op
    out._backward_done = False
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward_fn = None
    if _state["debug"] and not np.all(np.isfinite(data)):
        raise ContractError(f"non-finite values produced by op {op!r}")
    return out


# ---------------------------------------------------------------------------
# creation

def zeros(shape, requires_grad=False):
    return Tensor(np.zeros(_check_extents(shape), dtype=current_dtype()), requires_grad)


def ones(shape, requires_grad=False):
    return Tensor(np.ones(_check_extents(shape), dtype=current_dtype()), requires_grad)


def uniform(shape, lo=0.0, hi=1.0, seed=None, rng=None, requires_grad=False):
    """Uniform fill, reproducible from ``seed`` (or an external Generator)."""
    shape = _check_extents(shape)
    if rng is None:
        rng = np.random.default_rng(seed)
    data = rng.uniform(lo, hi, size=shape).astype(current_dtype())
    return Tensor(data, requires_grad)


def from_values(shape, values, requires_grad=False):
    shape = _check_extents(shape)
    arr = np.asarray(values, dtype=current_dtype()).reshape(shape)
    return Tensor(arr.copy(), requires_grad)


def he_uniform(shape, fan_in, rng):
    """Init for weights feeding a ReLU: U(+-sqrt(6/fan_in))."""
    bound = float(np.sqrt(6.0 / fan_in))
    return uniform(shape, -bound, bound, rng=rng, requires_grad=True)


def glorot_uniform(shape, fan_in, rng):
    """Variance-preserving init for linear weights: U(+-sqrt(3/fan_in))."""
    bound = float(np.sqrt(3.0 / fan_in))
    return uniform(shape, -bound, bound, rng=rng, requires_grad=True)


def constant(array, requires_grad=False):
    """Wrap an ndarray as a graph input (non-differentiable by default)."""
    if requires_grad:
        # differentiable leaves own their buffer so callers can perturb safely
        return Tensor(np.array(array, dtype=current_dtype()), True)
    return Tensor(np.asarray(array, dtype=current_dtype()))


# ---------------------------------------------------------------------------
# elementwise with broadcasting

def _unbroadcast(g, shape):
    # reduce an upstream gradient back onto an operand's (smaller) shape
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _broadcast_data(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def _binary(a, b, kind):
    if not isinstance(b, Tensor):
        # python scalar second operand: single-parent node
        c = float(b)
        if kind == "add":
            data, bwd = a.data + c, lambda g: (g,)
        elif kind == "sub":
            data, bwd = a.data - c, lambda g: (g,)
        else:
            data, bwd = a.data * c, lambda g: (g * c,)
        return apply_op(data, (a,), bwd, kind)
    _broadcast_data(a.data, b.data, kind)
    if kind == "add":
        data = a.data + b.data

        def bwd(g):
            return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    elif kind == "sub":
        data = a.data - b.data

        def bwd(g):
            return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)
    else:
        data = a.data * b.data

        def bwd(g):
            return (_unbroadcast(g * b.data, a.shape),
                    _unbroadcast(g * a.data, b.shape))
    return apply_op(data, (a, b), bwd, kind)


def add(a, b):
    return _binary(a, b, "add")


def sub(a, b):
    return _binary(a, b, "sub")


def mul(a, b):
    return _binary(a, b, "mul")


def elementwise(a, b, kind):
    """Dispatch form of the broadcasted arithmetic ops."""
    if kind not in ("add", "sub", "mul"):
        raise ParameterError(f"unknown elementwise kind {kind!r}")
    return _binary(a, b, kind)


# ---------------------------------------------------------------------------
# linear algebra / shape

def matmul(a, b):
    """2-D matrix product; dA = G·Bᵀ, dB = Aᵀ·G."""
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError("matmul expects rank-2 operands")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} vs {b.shape}")
    data = a.data @ b.data

    def bwd(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return apply_op(data, (a, b), bwd, "matmul")


def transpose(a):
    if a.data.ndim != 2:
        raise ShapeError("transpose expects a rank-2 tensor")
    return apply_op(a.data.T.copy(), (a,), lambda g: (g.T,), "transpose")


def reshape(a, shape):
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != a.size:
        raise ShapeError(f"cannot reshape {a.shape} to {shape}")
    old = a.shape
    return apply_op(a.data.reshape(shape), (a,),
                    lambda g: (g.reshape(old),), "reshape")


def concat(tensors, axis=0):
    tensors = list(tensors)
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return apply_op(data, tuple(tensors), bwd, "concat")


# ---------------------------------------------------------------------------
# activations

def relu(x):
    mask = x.data > 0
    return apply_op(np.where(mask, x.data, 0), (x,),
                    lambda g: (g * mask,), "relu")


def sigmoid(x):
    z = x.data
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)

    def bwd(g):
        return (g * out * (1.0 - out),)

    return apply_op(out, (x,), bwd, "sigmoid")


def softmax_lastdim(x):
    """Softmax over the last dimension, max-shifted for stability."""
    if x.data.ndim < 1:
        raise ShapeError("softmax_lastdim needs rank >= 1")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return apply_op(out, (x,), bwd, "softmax")


def activation(x, kind):
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "softmax_lastdim":
        return softmax_lastdim(x)
    raise ParameterError(f"unknown activation kind {kind!r}")


# ---------------------------------------------------------------------------
# reductions and simple math

def sum_all(x):
    shape = x.shape
    return apply_op(x.data.sum(keepdims=False).reshape(()), (x,),
                    lambda g: (np.broadcast_to(g, shape).copy(),), "sum")


def mean_all(x):
    n = x.size
    shape = x.shape
    return apply_op((x.data.sum() / n).reshape(()), (x,),
                    lambda g: (np.broadcast_to(g / n, shape).copy(),), "mean")


def absolute(x):
    s = np.sign(x.data)  # subgradient 0 at ties
    return apply_op(np.abs(x.data), (x,), lambda g: (g * s,), "abs")


def sqrt(x):
    out = np.sqrt(x.data)

    def bwd(g):
        return (g * (0.5 / out),)

    return apply_op(out, (x,), bwd, "sqrt")


# ---------------------------------------------------------------------------
# convolution

def _conv_out(extent, k, pad, stride):
    # framework floor convention; a trailing remainder row/col is discarded
    out = (extent + 2 * pad - k) // stride + 1
    if extent + 2 * pad < k or out < 1:
        raise ShapeError(f"kernel {k} exceeds padded extent {extent + 2 * pad}")
    return out


def _conv_view(xp, kh, kw, oh, ow, stride):
    c = xp.shape[0]
    s0, s1, s2 = xp.strides
    return as_strided(xp, shape=(c, oh, ow, kh, kw),
                      strides=(s0, s1 * stride, s2 * stride, s1, s2))


def _fold_cols(dcols, cin, hp, wp, kh, kw, oh, ow, stride, dtype):
    # scatter-add [cin, kh, kw, oh, ow] patch grads back onto the padded plane
    dxp = np.zeros((cin, hp, wp), dtype=dtype)
    for u in range(kh):
        for v in range(kw):
            dxp[:, u:u + oh * stride:stride, v:v + ow * stride:stride] += dcols[:, u, v]
    return dxp


def conv2d(x, w, b=None, stride=1, pad=0, groups=1):
    """Cross-correlation over [C,H,W] with zero padding and channel groups.

    ``groups == C_in`` with [C,1,kh,kw] weights is a depthwise convolution;
    a 1x1 kernel is a per-pixel fully-connected projection.
    """
    if x.data.ndim != 3 or w.data.ndim != 4:
        raise ShapeError("conv2d expects x[C,H,W] and w[Cout,Cin/g,kh,kw]")
    cin, h, wid = x.shape
    cout, cin_g, kh, kw = w.shape
    if cin % groups or cout % groups:
        raise ShapeError(f"channels ({cin}->{cout}) not divisible by groups={groups}")
    if cin_g != cin // groups:
        raise ShapeError(f"weight expects {cin_g} in-channels per group, input has {cin // groups}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError("kernel extents must be odd")
    if b is not None and b.shape != (cout,):
        raise ShapeError(f"bias shape {b.shape} != ({cout},)")
    oh = _conv_out(h, kh, pad, stride)
    ow = _conv_out(wid, kw, pad, stride)

    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad))) if pad else x.data
    hp, wp = xp.shape[1], xp.shape[2]
    view = _conv_view(xp, kh, kw, oh, ow, stride)
    depthwise = groups == cin and cout == cin and cin > 1

    cols = None
    if depthwise:
        out = np.einsum("chwuv,cuv->chw", view, w.data[:, 0], optimize=True)
    elif groups == 1:
        cols = view.transpose(0, 3, 4, 1, 2).reshape(cin * kh * kw, oh * ow)
        out = (w.data.reshape(cout, -1) @ cols).reshape(cout, oh, ow)
    else:
        out = np.empty((cout, oh, ow), dtype=x.dtype)
        og = cout // groups
        cols = []
        for gi in range(groups):
            vg = view[gi * cin_g:(gi + 1) * cin_g]
            cg = vg.transpose(0, 3, 4, 1, 2).reshape(cin_g * kh * kw, oh * ow)
            cols.append(cg)
            wg = w.data[gi * og:(gi + 1) * og].reshape(og, -1)
            out[gi * og:(gi + 1) * og] = (wg @ cg).reshape(og, oh, ow)
    if b is not None:
        out = out + b.data[:, None, None]

    parents = (x, w) if b is None else (x, w, b)

    def bwd(g):
        dx = dw = db = None
        if b is not None and b.requires_grad:
            db = g.sum(axis=(1, 2))
        if depthwise:
            if w.requires_grad:
                dw = np.einsum("chwuv,chw->cuv", view, g, optimize=True)[:, None]
            if x.requires_grad:
                dcols = np.einsum("cuv,chw->cuvhw", w.data[:, 0], g, optimize=True)
                dxp = _fold_cols(dcols, cin, hp, wp, kh, kw, oh, ow, stride, g.dtype)
                dx = dxp[:, pad:hp - pad, pad:wp - pad] if pad else dxp
        elif groups == 1:
            g2 = g.reshape(cout, -1)
            if w.requires_grad:
                dw = (g2 @ cols.T).reshape(w.shape)
            if x.requires_grad:
                dcols = (w.data.reshape(cout, -1).T @ g2).reshape(cin, kh, kw, oh, ow)
                dxp = _fold_cols(dcols, cin, hp, wp, kh, kw, oh, ow, stride, g.dtype)
                dx = dxp[:, pad:hp - pad, pad:wp - pad] if pad else dxp
        else:
            og = cout // groups
            dw = np.zeros_like(w.data) if w.requires_grad else None
            dxp = np.zeros((cin, hp, wp), dtype=g.dtype) if x.requires_grad else None
            for gi in range(groups):
                g2 = g[gi * og:(gi + 1) * og].reshape(og, -1)
                wg = w.data[gi * og:(gi + 1) * og].reshape(og, -1)
                if dw is not None:
                    dw[gi * og:(gi + 1) * og] = (g2 @ cols[gi].T).reshape(og, cin_g, kh, kw)
                if dxp is not None:
                    dcg = (wg.T @ g2).reshape(cin_g, kh, kw, oh, ow)
                    dxp[gi * cin_g:(gi + 1) * cin_g] += _fold_cols(
                        dcg, cin_g, hp, wp, kh, kw, oh, ow, stride, g.dtype)
            if dxp is not None:
                dx = dxp[:, pad:hp - pad, pad:wp - pad] if pad else dxp
        if b is None:
            return dx, dw
        return dx, dw, db

    return apply_op(np.ascontiguousarray(out), parents, bwd, "conv2d")


# ---------------------------------------------------------------------------
# pooling / resampling

def _window_layout(n, win):
    count = n // win
    bounds = np.arange(count) * win
    sizes = np.full(count, win, dtype=np.int64)
    sizes[-1] = n - win * (count - 1)  # trailing remainder folds into the last window
    return count, bounds, sizes


def avg_pool_window(x, wh, ww):
    """Non-overlapping window means over [C,H,W]; remainders fold into the last window."""
    if x.data.ndim != 3:
        raise ShapeError("avg_pool_window expects [C,H,W]")
    c, h, w = x.shape
    if not (1 <= wh <= h and 1 <= ww <= w):
        raise ParameterError(f"window {(wh, ww)} outside [1,{h}]x[1,{w}]")
    nh, bh, sh = _window_layout(h, wh)
    nw, bw, sw = _window_layout(w, ww)
    sums = np.add.reduceat(np.add.reduceat(x.data, bh, axis=1), bw, axis=2)
    area = (sh[:, None] * sw[None, :]).astype(x.dtype)
    out = sums / area

    def bwd(g):
        spread = g / area
        return (np.repeat(np.repeat(spread, sh, axis=1), sw, axis=2),)

    return apply_op(out, (x,), bwd, "avg_pool")


def broadcast_windows(pooled, h, w, wh, ww):
    """Paint each window mean back over the cells of its window."""
    nh, bh, sh = _window_layout(h, wh)
    nw, bw, sw = _window_layout(w, ww)
    if pooled.shape[1:] != (nh, nw):
        raise ShapeError(f"pooled shape {pooled.shape} does not match layout ({nh},{nw})")
    out = np.repeat(np.repeat(pooled.data, sh, axis=1), sw, axis=2)

    def bwd(g):
        return (np.add.reduceat(np.add.reduceat(g, bh, axis=1), bw, axis=2),)

    return apply_op(out, (pooled,), bwd, "broadcast_windows")


def avg_pool_ratio(x, ratio):
    """DC extraction: pooled window means plus their broadcast back to H×W.

    ratio=1.0 is global average pooling (one window per channel).
    """
    if not 0.0 < ratio <= 1.0:
        raise ParameterError(f"pooling ratio {ratio} outside (0, 1]")
    c, h, w = x.shape
    wh = max(1, math.floor(ratio * h))
    ww = max(1, math.floor(ratio * w))
    pooled = avg_pool_window(x, wh, ww)
    low = broadcast_windows(pooled, h, w, wh, ww)
    return pooled, low


def upsample_nearest(x, out_h, out_w):
    """Nearest-neighbor upsampling with src_i = floor(i*h/out_h)."""
    if x.data.ndim != 3:
        raise ShapeError("upsample_nearest expects [C,H,W]")
    c, h, w = x.shape
    if out_h < h or out_w < w:
        raise ParameterError(f"cannot downscale {h}x{w} to {out_h}x{out_w}")
    ih = (np.arange(out_h) * h) // out_h
    iw = (np.arange(out_w) * w) // out_w
    out = x.data[:, ih][:, :, iw]
    fh = np.searchsorted(ih, np.arange(h))
    fw = np.searchsorted(iw, np.arange(w))

    def bwd(g):
        acc = np.add.reduceat(g, fh, axis=1)
        acc = np.add.reduceat(acc, fw, axis=2)
        return (acc,)

    return apply_op(np.ascontiguousarray(out), (x,), bwd, "upsample")


# ---------------------------------------------------------------------------
# normalization

def layernorm(x, gamma, beta, eps=1e-5):
    """Normalize over all C·H·W elements, then apply per-channel affine."""
    if eps <= 0:
        raise ParameterError("eps must be positive")
    if x.data.ndim != 3:
        raise ShapeError("layernorm expects [C,H,W]")
    c = x.shape[0]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"affine params must have shape ({c},)")
    mu = x.data.mean()
    var = x.data.var()
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = gamma.data[:, None, None] * xhat + beta.data[:, None, None]

    def bwd(g):
        dxhat = g * gamma.data[:, None, None]
        dgamma = (g * xhat).sum(axis=(1, 2)) if gamma.requires_grad else None
        dbeta = g.sum(axis=(1, 2)) if beta.requires_grad else None
        dx = None
        if x.requires_grad:
            dx = inv * (dxhat - dxhat.mean() - xhat * (dxhat * xhat).mean())
        return dx, dgamma, dbeta

    return apply_op(out, (x, gamma, beta), bwd, "layernorm")


# ---------------------------------------------------------------------------
# backward engine

def _topo_order(root):
    order, visited, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


def backward(loss):
    """Reverse sweep from a scalar loss; accumulates into leaf ``grad`` buffers."""
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._backward_done:
        raise StateError("backward already ran for this loss; zero_grad and rebuild the graph")
    loss._backward_done = True

    order = _topo_order(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward_fn is not None:
            parent_grads = node._backward_fn(g)
            for p, pg in zip(node._parents, parent_grads):
                if pg is None:
                    continue
                acc = grads.get(id(p))
                grads[id(p)] = pg if acc is None else acc + pg
        elif node.requires_grad:
            node.grad = g if node.grad is None else node.grad + g


def zero_grad(tensors):
    for t in tensors:
        t.grad = None
