"""Minimal dense-tensor engine with tape-based reverse-mode differentiation.

Tensors wrap numpy arrays of rank <= 4 (the full rank is batch, channel,
height, width). Each differentiable kernel records a backward rule on a
global tape in execution order, so the backward pass is a single reverse
sweep over the tape -- no separate topological sort is needed and every
node is visited exactly once. The tape is cleared once consumed.

All kernels use fixed loop nesting and reduction order; identical inputs
give bit-identical outputs across runs. Storage defaults to float32, and
a graph can be replayed in float64 by casting its leaves (see grad_check).
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np

from .errors import ConfigurationError, DimensionError, UsageError

_FINITE_CHECKS = False


def set_finite_checks(enabled):
    """Toggle debug assertions that every op output is finite."""
    global _FINITE_CHECKS
    _FINITE_CHECKS = bool(enabled)


class Tensor:
    """Dense numeric array participating in the autodiff graph."""

    __slots__ = ("_data", "_grad", "requires_grad", "no_decay")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        if arr.ndim > 4:
            raise DimensionError(
                f"tensors are at most 4-D (B,C,H,W); got rank {arr.ndim}")
        self._data = arr
        self._grad = None
        self.requires_grad = bool(requires_grad)
        self.no_decay = False

    # numpy decays 0-d results to immutable scalars; normalizing on every
    # assignment keeps scalar parameters mutable (finite differences poke
    # them in place).
    @property
    def data(self):
        return self._data

    @data.setter
    def data(self, value):
        self._data = np.asarray(value)

    @property
    def grad(self):
        return self._grad

    @grad.setter
    def grad(self, value):
        self._grad = None if value is None else np.asarray(value)

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def astype_(self, dtype):
        """Cast storage in place (used for the float64 replay mode)."""
        self._data = self._data.astype(dtype)
        if self._grad is not None:
            self._grad = self._grad.astype(dtype)
        return self

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # Scalar-friendly operator sugar; heavy ops live as module functions.
    def __add__(self, other):
        return add(self, _wrap(other, self))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _wrap(other, self))

    def __rsub__(self, other):
        return sub(_wrap(other, self), self)

    def __mul__(self, other):
        return mul(self, _wrap(other, self))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, _wrap(other, self))

    def __rtruediv__(self, other):
        return div(_wrap(other, self), self)

    def __neg__(self):
        return mul(self, _wrap(-1.0, self))


def _wrap(value, like):
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.data.dtype))


class GradTape:
    """Ordered op records; reverse replay of the list is the backward pass."""

    __slots__ = ("entries",)

    def __init__(self):
        self.entries = []

    def __len__(self):
        return len(self.entries)

    def clear(self):
        self.entries = []


_tape = GradTape()
_grad_enabled = True


def tape():
    return _tape


def clear_tape():
    _tape.clear()


@contextmanager
def no_grad():
    """Disable tape recording inside the block (eval / inference / FD probes)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _attach(out, inputs, backward):
    if _FINITE_CHECKS and not np.all(np.isfinite(out.data)):
        raise FloatingPointError("non-finite value produced by forward op")
    if _grad_enabled and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        _tape.entries.append((out, inputs, backward))
    return out


def _accumulate(t, g):
    if t.grad is None:
        t.grad = g
    else:
        t.grad = t.grad + g


def backward(loss):
    """Run the reverse sweep from a scalar loss; consumes the tape."""
    if loss.data.ndim != 0:
        raise UsageError(
            f"backward expects a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        raise UsageError("loss does not depend on any gradient-tracked tensor")
    loss.grad = np.ones_like(loss.data)
    entries = _tape.entries
    for out, inputs, bwd in reversed(entries):
        g = out.grad
        if g is None:
            continue
        grads = bwd(g)
        for t, gi in zip(inputs, grads):
            if gi is not None and t.requires_grad:
                _accumulate(t, gi)
    _tape.clear()


# ---------------------------------------------------------------------------
# MAC tally: kernels report the multiply-adds they actually perform, derived
# from runtime operand shapes. This is the instrumented counter the static
# accounting tables are checked against.


class MacTally:
    __slots__ = ("total",)

    def __init__(self):
        self.total = 0

    def add(self, n):
        self.total += int(n)


_tally = None


@contextmanager
def tally_macs():
    global _tally
    t = MacTally()
    prev = _tally
    _tally = t
    try:
        yield t
    finally:
        _tally = prev


def _tally_add(n):
    if _tally is not None:
        _tally.add(n)


# ---------------------------------------------------------------------------
# Elementwise and scalar ops


def _check_binary_shapes(a, b, opname):
    if a.shape == b.shape or a.data.ndim == 0 or b.data.ndim == 0:
        return
    raise DimensionError(
        f"{opname}: shapes {a.shape} and {b.shape} are neither equal nor scalar")


def _reduce_to(g, t):
    # Gradient of a scalar operand broadcast against a larger one.
    if g.shape == t.data.shape:
        return g
    return np.asarray(g.sum(), dtype=t.data.dtype)


def add(a, b):
    _check_binary_shapes(a, b, "add")
    out = Tensor(a.data + b.data)

    def bwd(g):
        return _reduce_to(g, a), _reduce_to(g, b)

    return _attach(out, (a, b), bwd)


def sub(a, b):
    _check_binary_shapes(a, b, "sub")
    out = Tensor(a.data - b.data)

    def bwd(g):
        return _reduce_to(g, a), _reduce_to(g, b) * np.asarray(-1, dtype=b.dtype)

    return _attach(out, (a, b), bwd)


def mul(a, b):
    _check_binary_shapes(a, b, "mul")
    out = Tensor(a.data * b.data)

    def bwd(g):
        return _reduce_to(g * b.data, a), _reduce_to(g * a.data, b)

    return _attach(out, (a, b), bwd)


def div(a, b):
    _check_binary_shapes(a, b, "div")
    out = Tensor(a.data / b.data)

    def bwd(g):
        ga = _reduce_to(g / b.data, a)
        gb = _reduce_to(-g * a.data / (b.data * b.data), b)
        return ga, gb

    return _attach(out, (a, b), bwd)


def relu(x):
    out = Tensor(np.maximum(x.data, 0))

    def bwd(g):
        return (g * (x.data > 0).astype(x.data.dtype),)

    return _attach(out, (x,), bwd)


def sigmoid(x):
    d = x.data
    y = np.empty_like(d)
    pos = d >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    y[~pos] = ex / (1.0 + ex)
    out = Tensor(y)

    def bwd(g):
        return (g * y * (1.0 - y),)

    return _attach(out, (x,), bwd)


def exp(x):
    y = np.exp(x.data)
    out = Tensor(y)

    def bwd(g):
        return (g * y,)

    return _attach(out, (x,), bwd)


def sum_all(x):
    out = Tensor(np.asarray(x.data.sum(), dtype=x.data.dtype))

    def bwd(g):
        return (np.full_like(x.data, g),)

    return _attach(out, (x,), bwd)


def mean_all(x):
    n = x.data.size
    out = Tensor(np.asarray(x.data.mean(), dtype=x.data.dtype))

    def bwd(g):
        return (np.full_like(x.data, g / n),)

    return _attach(out, (x,), bwd)


# ---------------------------------------------------------------------------
# Convolutions


def _check_4d(x, name):
    if x.data.ndim != 4:
        raise DimensionError(f"{name} expects a 4-D (B,C,H,W) tensor, got rank {x.data.ndim}")


def conv2d_pointwise(x, weight):
    """1x1 convolution mixing channels; no bias."""
    _check_4d(x, "conv2d_pointwise")
    if weight.data.ndim != 4 or weight.shape[2:] != (1, 1):
        raise DimensionError(
            f"pointwise kernel must have shape (Cout,Cin,1,1), got {weight.shape}")
    b, cin, h, w = x.shape
    cout = weight.shape[0]
    if weight.shape[1] != cin:
        raise DimensionError(
            f"channel axis mismatch: input has {cin} channels, kernel expects {weight.shape[1]}")
    w2 = weight.data.reshape(cout, cin)
    y = np.tensordot(x.data, w2, axes=([1], [1]))  # (B,H,W,Cout)
    out = Tensor(np.ascontiguousarray(y.transpose(0, 3, 1, 2)))
    _tally_add(b * h * w * cin * cout)

    def bwd(g):
        gx = gw = None
        if x.requires_grad:
            t = np.tensordot(g, w2, axes=([1], [0]))  # (B,H,W,Cin)
            gx = np.ascontiguousarray(t.transpose(0, 3, 1, 2))
        if weight.requires_grad:
            gw = np.tensordot(g, x.data, axes=([0, 2, 3], [0, 2, 3]))
            gw = gw.reshape(weight.shape)
        return gx, gw

    return _attach(out, (x, weight), bwd)


def conv2d_depthwise(x, weight, padding=None):
    """Per-channel KxK convolution (stride 1, spatial size preserved).

    weight has shape (C*m, 1, K, K) for an integer channel multiplier m;
    output channel c*m+j is input channel c convolved with kernel c*m+j.
    """
    _check_4d(x, "conv2d_depthwise")
    if weight.data.ndim != 4 or weight.shape[1] != 1:
        raise DimensionError(
            f"depthwise kernel must have shape (C*m,1,K,K), got {weight.shape}")
    b, c, h, w = x.shape
    cm, _, k, k2 = weight.shape
    if k != k2:
        raise DimensionError(f"depthwise kernel must be square, got {k}x{k2}")
    if k % 2 == 0:
        raise ConfigurationError(f"depthwise kernel size must be odd, got {k}")
    if cm % c != 0:
        raise DimensionError(
            f"channel axis mismatch: kernel channels {cm} not a multiple of input channels {c}")
    m = cm // c
    p = k // 2 if padding is None else padding

    xr = x.data if m == 1 else np.repeat(x.data, m, axis=1)
    xp = np.pad(xr, ((0, 0), (0, 0), (p, p), (p, p)))
    wv = weight.data[:, 0]  # (Cm,K,K)
    out_arr = np.zeros((b, cm, h, w), dtype=x.data.dtype)
    for ky in range(k):
        for kx in range(k):
            out_arr += wv[:, ky, kx][None, :, None, None] * xp[:, :, ky:ky + h, kx:kx + w]
            _tally_add(out_arr.size)
    out = Tensor(out_arr)

    def bwd(g):
        gx = gw = None
        if weight.requires_grad:
            gw = np.zeros_like(weight.data)
            for ky in range(k):
                for kx in range(k):
                    gw[:, 0, ky, kx] = np.einsum(
                        "bchw,bchw->c", g, xp[:, :, ky:ky + h, kx:kx + w])
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for ky in range(k):
                for kx in range(k):
                    gxp[:, :, ky:ky + h, kx:kx + w] += wv[:, ky, kx][None, :, None, None] * g
            gxr = gxp[:, :, p:p + h, p:p + w]
            if m == 1:
                gx = np.ascontiguousarray(gxr)
            else:
                gx = gxr.reshape(b, c, m, h, w).sum(axis=2)
        return gx, gw

    return _attach(out, (x, weight), bwd)


def conv2d(x, weight, stride=1, padding=None):
    """Dense KxK convolution with stride; no bias; zero padding."""
    _check_4d(x, "conv2d")
    if weight.data.ndim != 4:
        raise DimensionError(f"conv kernel must be 4-D, got rank {weight.data.ndim}")
    b, cin, h, w = x.shape
    cout, wcin, k, k2 = weight.shape
    if k != k2:
        raise DimensionError(f"conv kernel must be square, got {k}x{k2}")
    if wcin != cin:
        raise DimensionError(
            f"channel axis mismatch: input has {cin} channels, kernel expects {wcin}")
    if k == 1 and stride == 1:
        return conv2d_pointwise(x, weight)
    p = k // 2 if padding is None else padding
    ho = (h + 2 * p - k) // stride + 1
    wo = (w + 2 * p - k) // stride + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p)))
    sb, sc, sh, sw = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp,
        shape=(b, ho, wo, cin, k, k),
        strides=(sb, sh * stride, sw * stride, sc, sh, sw),
    )
    cols = np.ascontiguousarray(windows).reshape(b * ho * wo, cin * k * k)
    wmat = weight.data.reshape(cout, cin * k * k)
    y = cols @ wmat.T
    out = Tensor(np.ascontiguousarray(
        y.reshape(b, ho, wo, cout).transpose(0, 3, 1, 2)))
    _tally_add(cols.shape[0] * cols.shape[1] * cout)

    def bwd(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(b * ho * wo, cout)
        gx = gw = None
        if weight.requires_grad:
            gw = (g2.T @ cols).reshape(weight.shape)
        if x.requires_grad:
            dcols = (g2 @ wmat).reshape(b, ho, wo, cin, k, k)
            gxp = np.zeros_like(xp)
            for ky in range(k):
                for kx in range(k):
                    gxp[:, :, ky:ky + (ho - 1) * stride + 1:stride,
                        kx:kx + (wo - 1) * stride + 1:stride] += \
                        dcols[:, :, :, :, ky, kx].transpose(0, 3, 1, 2)
            gx = np.ascontiguousarray(gxp[:, :, p:p + h, p:p + w])
        return gx, gw

    return _attach(out, (x, weight), bwd)


# ---------------------------------------------------------------------------
# Normalization


def batchnorm2d(x, gamma, beta, running_mean, running_var, training,
                momentum=0.1, eps=1e-5):
    """Per-channel batch normalization over (B,H,W).

    Train mode normalizes with batch statistics (population variance) and
    updates the running buffers in place; eval mode reads the buffers.
    """
    _check_4d(x, "batchnorm2d")
    c = x.shape[1]
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise DimensionError(
            f"channel axis mismatch: input has {c} channels, affine has {gamma.data.shape}")
    if training:
        mu = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        running_mean *= (1.0 - momentum)
        running_mean += momentum * mu
        running_var *= (1.0 - momentum)
        running_var += momentum * var
    else:
        mu = running_mean.astype(x.data.dtype, copy=False)
        var = running_var.astype(x.data.dtype, copy=False)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu[None, :, None, None]) * inv[None, :, None, None]
    out = Tensor(gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None])

    def bwd(g):
        gx = gg = gb = None
        if gamma.requires_grad:
            gg = np.einsum("bchw,bchw->c", g, xhat)
        if beta.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        if x.requires_grad:
            gxh = g * gamma.data[None, :, None, None]
            if training:
                n = x.data.shape[0] * x.data.shape[2] * x.data.shape[3]
                mean_gxh = gxh.mean(axis=(0, 2, 3))
                mean_gxh_xhat = (gxh * xhat).mean(axis=(0, 2, 3))
                gx = inv[None, :, None, None] * (
                    gxh - mean_gxh[None, :, None, None]
                    - xhat * mean_gxh_xhat[None, :, None, None])
            else:
                gx = gxh * inv[None, :, None, None]
        return gx, gg, gb

    return _attach(out, (x, gamma, beta), bwd)


# ---------------------------------------------------------------------------
# Shape / layout ops


def concat_channels(xs):
    """Stack tensors along the channel axis in argument order."""
    if not xs:
        raise UsageError("concat_channels needs at least one tensor")
    for x in xs:
        _check_4d(x, "concat_channels")
    b, _, h, w = xs[0].shape
    for i, x in enumerate(xs[1:], start=1):
        if x.shape[0] != b:
            raise DimensionError(f"batch axis mismatch at input {i}: {x.shape[0]} vs {b}")
        if x.shape[2] != h or x.shape[3] != w:
            raise DimensionError(
                f"spatial axis mismatch at input {i}: {x.shape[2:]} vs {(h, w)}")
    out = Tensor(np.concatenate([x.data for x in xs], axis=1))
    sizes = [x.shape[1] for x in xs]

    def bwd(g):
        grads = []
        off = 0
        for x, cs in zip(xs, sizes):
            grads.append(np.ascontiguousarray(g[:, off:off + cs]) if x.requires_grad else None)
            off += cs
        return tuple(grads)

    return _attach(out, tuple(xs), bwd)


def slice_channels(x, start, stop):
    _check_4d(x, "slice_channels")
    c = x.shape[1]
    if not (0 <= start < stop <= c):
        raise DimensionError(f"channel slice [{start}:{stop}] out of range for {c} channels")
    out = Tensor(np.ascontiguousarray(x.data[:, start:stop]))

    def bwd(g):
        gx = np.zeros_like(x.data)
        gx[:, start:stop] = g
        return (gx,)

    return _attach(out, (x,), bwd)


def shuffle_permutation(channels, groups):
    """Index map for the interleaving shuffle: out[j*G+g] = in[g*(C/G)+j]."""
    if channels % groups != 0:
        raise ConfigurationError(
            f"channel count {channels} not divisible by group count {groups}")
    return np.arange(channels).reshape(groups, channels // groups).T.reshape(-1)


def channel_shuffle(x, groups):
    """Parameter-free channel permutation interleaving the groups."""
    _check_4d(x, "channel_shuffle")
    idx = shuffle_permutation(x.shape[1], groups)
    inv = np.argsort(idx)
    out = Tensor(np.ascontiguousarray(x.data[:, idx]))

    def bwd(g):
        return (np.ascontiguousarray(g[:, inv]),)

    return _attach(out, (x,), bwd)


def group_avgpool(x, groups):
    """Mean over (C/G, H, W) per group; returns a (B, G) descriptor."""
    _check_4d(x, "group_avgpool")
    b, c, h, w = x.shape
    if c % groups != 0:
        raise ConfigurationError(
            f"channel count {c} not divisible by group count {groups}")
    n = (c // groups) * h * w
    out = Tensor(x.data.reshape(b, groups, n).mean(axis=2))

    def bwd(g):
        gx = np.repeat(g / n, n, axis=1).reshape(x.data.shape)
        return (gx,)

    return _attach(out, (x,), bwd)


def group_scale(x, scale, groups):
    """Multiply each channel group by its entry of a learnable (G,) vector."""
    _check_4d(x, "group_scale")
    b, c, h, w = x.shape
    if c % groups != 0:
        raise ConfigurationError(
            f"channel count {c} not divisible by group count {groups}")
    if scale.data.shape != (groups,):
        raise DimensionError(
            f"scale vector must have shape ({groups},), got {scale.data.shape}")
    cg = c // groups
    sc = np.repeat(scale.data, cg)
    out = Tensor(x.data * sc[None, :, None, None])

    def bwd(g):
        gx = gs = None
        if x.requires_grad:
            gx = g * sc[None, :, None, None]
        if scale.requires_grad:
            gs = (g * x.data).reshape(b, groups, cg * h * w).sum(axis=(0, 2))
        return gx, gs

    return _attach(out, (x, scale), bwd)


def group_gate(x, gates, groups):
    """Multiply each channel group by a per-sample gate from a (B, G) tensor."""
    _check_4d(x, "group_gate")
    b, c, h, w = x.shape
    if c % groups != 0:
        raise ConfigurationError(
            f"channel count {c} not divisible by group count {groups}")
    if gates.data.shape != (b, groups):
        raise DimensionError(
            f"gates must have shape ({b},{groups}), got {gates.data.shape}")
    cg = c // groups
    ge = np.repeat(gates.data, cg, axis=1)
    out = Tensor(x.data * ge[:, :, None, None])

    def bwd(g):
        gx = gg = None
        if x.requires_grad:
            gx = g * ge[:, :, None, None]
        if gates.requires_grad:
            gg = (g * x.data).reshape(b, groups, cg * h * w).sum(axis=2)
        return gx, gg

    return _attach(out, (x, gates), bwd)


def linear(x, weight, bias=None):
    """Affine map on a (B, Fin) tensor: x @ weight.T + bias."""
    if x.data.ndim != 2:
        raise DimensionError(f"linear expects a 2-D (B,F) tensor, got rank {x.data.ndim}")
    fout, fin = weight.shape
    if x.shape[1] != fin:
        raise DimensionError(
            f"feature axis mismatch: input has {x.shape[1]} features, weight expects {fin}")
    y = x.data @ weight.data.T
    if bias is not None:
        y = y + bias.data
    out = Tensor(y)
    _tally_add(x.shape[0] * fin * fout)

    def bwd(g):
        gx = gw = gb = None
        if x.requires_grad:
            gx = g @ weight.data
        if weight.requires_grad:
            gw = g.T @ x.data
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=0)
        if bias is None:
            return gx, gw
        return gx, gw, gb

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return _attach(out, inputs, bwd)


# ---------------------------------------------------------------------------
# Bilinear upsampling (half-pixel centers, edge clamp)

_interp_cache = {}


def _interp_matrix(n_in, n_out, dtype):
    key = (n_in, n_out, np.dtype(dtype).str)
    mat = _interp_cache.get(key)
    if mat is None:
        src = (np.arange(n_out, dtype=np.float64) + 0.5) * n_in / n_out - 0.5
        src = np.clip(src, 0, n_in - 1)
        i0 = np.floor(src).astype(int)
        i1 = np.minimum(i0 + 1, n_in - 1)
        w0 = (1.0 - (src - i0)).astype(dtype)
        w1 = (np.ones(n_out, dtype=dtype) - w0)  # rows sum to exactly 1
        mat = np.zeros((n_out, n_in), dtype=dtype)
        rows = np.arange(n_out)
        np.add.at(mat, (rows, i0), w0)
        np.add.at(mat, (rows, i1), w1)
        _interp_cache[key] = mat
    return mat


def upsample_bilinear(x, size):
    """Resize (B,C,H,W) to (B,C,H',W') by bilinear interpolation.

    Half-pixel source centers, edges clamped. Counts 4 multiply-adds per
    output element in the MAC tally regardless of realization.
    """
    _check_4d(x, "upsample_bilinear")
    ho, wo = size
    _, _, h, w = x.shape
    if ho <= 0 or wo <= 0:
        raise ConfigurationError(f"target size must be positive, got {(ho, wo)}")
    if ho < h or wo < w:
        raise ConfigurationError(
            f"target size {(ho, wo)} must not shrink input {(h, w)}")
    if ho == h and wo == w:
        return x
    rmat = _interp_matrix(h, ho, x.data.dtype)
    cmat = _interp_matrix(w, wo, x.data.dtype)
    y = np.matmul(np.matmul(rmat, x.data), cmat.T)
    out = Tensor(y)
    _tally_add(4 * out.data.size)

    def bwd(g):
        return (np.matmul(np.matmul(rmat.T, g), cmat),)

    return _attach(out, (x,), bwd)


# ---------------------------------------------------------------------------
# Fused loss kernel


def smooth_l1(pred, target, beta=1.0):
    """Mean Huber-style loss: quadratic below beta, linear above."""
    if pred.shape != target.shape:
        raise DimensionError(
            f"smooth_l1 shape mismatch: {pred.shape} vs {target.shape}")
    d = pred.data - target.data
    ad = np.abs(d)
    quad = ad < beta
    vals = np.where(quad, 0.5 * d * d / beta, ad - 0.5 * beta)
    n = d.size
    out = Tensor(np.asarray(vals.mean(), dtype=pred.data.dtype))

    def bwd(g):
        base = np.clip(d, -beta, beta) / beta
        gp = gt = None
        if pred.requires_grad:
            gp = (g / n) * base
        if target.requires_grad:
            gt = -(g / n) * base
        return gp, gt

    return _attach(out, (pred, target), bwd)


# ---------------------------------------------------------------------------
# Gradient checking


def grad_check(f, wrt, h=1e-3):
    """Max relative error between autodiff and central finite differences.

    ``f`` is a no-argument callable rebuilding the graph from the tensors in
    ``wrt`` (a Tensor or a sequence) and returning a scalar Tensor. Run it
    on float64 tensors for tight tolerances. The denominator for each
    coordinate is max(|analytic|, |numeric|, 1e-8).
    """
    tensors = [wrt] if isinstance(wrt, Tensor) else list(wrt)
    for t in tensors:
        t.grad = None
    clear_tape()
    loss = f()
    backward(loss)
    analytic = []
    for t in tensors:
        if t.grad is None:
            analytic.append(np.zeros_like(t.data))
        else:
            analytic.append(np.array(t.grad, copy=True))

    max_err = 0.0
    with no_grad():
        for t, a in zip(tensors, analytic):
            flat = t.data.reshape(-1)
            aflat = a.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                lp = float(f().data)
                flat[i] = orig - h
                lm = float(f().data)
                flat[i] = orig
                num = (lp - lm) / (2.0 * h)
                denom = max(abs(aflat[i]), abs(num), 1e-8)
                err = abs(aflat[i] - num) / denom
                if err > max_err:
                    max_err = err
    return max_err
