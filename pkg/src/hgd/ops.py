"""Differentiable primitive operations over hgd.tensor.Tensor.

Feature maps are (channels, height, width). Every op validates shapes,
computes the forward value with numpy, and attaches a backward closure that
accumulates adjoints into any parent with requires_grad set.

Conventions fixed here (and relied on by the oracles in the test suite):
- bilinear_resize uses the half-pixel convention src = (dst+0.5)*in/out - 0.5
  with edge clamping, realized as dense row/column interpolation matrices so
  the backward pass is the exact transpose;
- nearest_resize picks src = floor(dst*in/out);
- maxpool2x2 uses stride-2 windows clipped at the edges (ceil-mode sizes by
  default, explicit target dims allowed) and routes the gradient to the
  first maximal element in row-major window order;
- relu's gradient at exactly 0 is 0;
- softmax_spatial subtracts the per-channel spatial max before exponentiating.
"""

from __future__ import annotations

import contextlib

import numpy as np

from . import tensor as _t
from .tensor import Tensor, DimensionError


def _make(data, parents, op, backward_fn=None):
    if _t.DEBUG_CHECK_FINITE and not np.all(np.isfinite(data)):
        raise FloatingPointError(f"non-finite values produced by {op}")
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    out._parents = tuple(parents)
    out._op = op
    if out.requires_grad and backward_fn is not None:
        out._backward_fn = backward_fn
    return out


def _need(t: Tensor) -> bool:
    return t.requires_grad


def _acc(t: Tensor, value):
    t.ensure_grad()
    t.grad += value


def _check_rank(t: Tensor, rank: int, what: str):
    if t.data.ndim != rank:
        raise DimensionError(f"{what} must have rank {rank}, got dims {t.dims}")


# --------------------------------------------------------------- arithmetic

def add(a: Tensor, b: Tensor) -> Tensor:
    if a.dims != b.dims:
        raise DimensionError(f"add operands differ: {a.dims} vs {b.dims}")

    def bwd(g):
        if _need(a):
            _acc(a, g)
        if _need(b):
            _acc(b, g)

    return _make(a.data + b.data, (a, b), "add", bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.dims != b.dims:
        raise DimensionError(f"mul operands differ: {a.dims} vs {b.dims}")

    def bwd(g):
        if _need(a):
            _acc(a, g * b.data)
        if _need(b):
            _acc(b, g * a.data)

    return _make(a.data * b.data, (a, b), "mul", bwd)


def scalar_scale(x: Tensor, s: float) -> Tensor:
    s = float(s)

    def bwd(g):
        if _need(x):
            _acc(x, s * g)

    return _make(s * x.data, (x,), "scalar_scale", bwd)


def sum_all(x: Tensor) -> Tensor:
    def bwd(g):
        if _need(x):
            _acc(x, np.broadcast_to(g, x.dims))

    return _make(np.asarray(x.data.sum(), dtype=x.dtype), (x,), "sum_all", bwd)


class GradcheckError(RuntimeError):
    """Raised when gradient verification cannot proceed (non-finite loss,
    unsupported dtype) as opposed to merely reporting a mismatch."""


# ReLU backward scale; != 1.0 only inside broken_relu_gradient() below.
_RELU_GRAD_SCALE = 1.0


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def bwd(g):
        if _need(x):
            _acc(x, g * mask * _RELU_GRAD_SCALE)

    # multiply (not where) so non-finite inputs stay visible to the debug check
    return _make(x.data * mask, (x,), "relu", bwd)


@contextlib.contextmanager
def broken_relu_gradient(scale: float = 1.5):
    """Deliberately mis-scale relu's backward pass.

    Exists solely so the gradient checker's failure path can be exercised;
    see the negative tests and the gradcheck CLI flag.
    """
    global _RELU_GRAD_SCALE
    _RELU_GRAD_SCALE = float(scale)
    try:
        yield
    finally:
        _RELU_GRAD_SCALE = 1.0


# ------------------------------------------------------------- convolutions

def conv1x1(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Pointwise convolution: out(o,x,y) = bias(o) + sum_i weight(o,i) * in(i,x,y)."""
    _check_rank(x, 3, "conv1x1 input")
    _check_rank(weight, 2, "conv1x1 weight")
    _check_rank(bias, 1, "conv1x1 bias")
    if weight.dims[1] != x.dims[0]:
        raise DimensionError(
            f"conv1x1 input channel axis: weight expects {weight.dims[1]}, input has {x.dims[0]}")
    if bias.dims[0] != weight.dims[0]:
        raise DimensionError(
            f"conv1x1 output channel axis: weight makes {weight.dims[0]}, bias has {bias.dims[0]}")

    out = np.tensordot(weight.data, x.data, axes=([1], [0])) + bias.data[:, None, None]

    def bwd(g):
        if _need(x):
            _acc(x, np.tensordot(weight.data, g, axes=([0], [0])))
        if _need(weight):
            _acc(weight, np.tensordot(g, x.data, axes=([1, 2], [1, 2])))
        if _need(bias):
            _acc(bias, g.sum(axis=(1, 2)))

    return _make(out, (x, weight, bias), "conv1x1", bwd)


def conv3x3(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1) -> Tensor:
    """3x3 convolution, padding 1, stride 1 or 2 (the toy encoder's kernel)."""
    _check_rank(x, 3, "conv3x3 input")
    _check_rank(weight, 4, "conv3x3 weight")
    if weight.dims[2:] != (3, 3):
        raise DimensionError(f"conv3x3 weight window must be 3x3, got {weight.dims[2:]}")
    if weight.dims[1] != x.dims[0]:
        raise DimensionError(
            f"conv3x3 input channel axis: weight expects {weight.dims[1]}, input has {x.dims[0]}")
    if stride not in (1, 2):
        raise DimensionError(f"conv3x3 stride must be 1 or 2, got {stride}")

    c_in, h, w = x.dims
    oh = (h + 2 - 3) // stride + 1
    ow = (w + 2 - 3) // stride + 1
    xp = np.pad(x.data, ((0, 0), (1, 1), (1, 1)))

    def tap_slice(arr, dy, dx):
        return arr[:, dy:dy + stride * (oh - 1) + 1:stride, dx:dx + stride * (ow - 1) + 1:stride]

    out = np.broadcast_to(bias.data[:, None, None], (weight.dims[0], oh, ow)).copy()
    for dy in range(3):
        for dx in range(3):
            out += np.tensordot(weight.data[:, :, dy, dx], tap_slice(xp, dy, dx), axes=([1], [0]))

    def bwd(g):
        if _need(x):
            gxp = np.zeros_like(xp)
            for dy in range(3):
                for dx in range(3):
                    tap_slice(gxp, dy, dx)[...] += np.tensordot(
                        weight.data[:, :, dy, dx], g, axes=([0], [0]))
            _acc(x, gxp[:, 1:h + 1, 1:w + 1])
        if _need(weight):
            gw = np.empty_like(weight.data)
            for dy in range(3):
                for dx in range(3):
                    gw[:, :, dy, dx] = np.tensordot(g, tap_slice(xp, dy, dx), axes=([1, 2], [1, 2]))
            _acc(weight, gw)
        if _need(bias):
            _acc(bias, g.sum(axis=(1, 2)))

    return _make(out, (x, weight, bias), "conv3x3", bwd)


# ----------------------------------------------------------------- resizing

_RESIZE_CACHE: dict = {}


def _bilinear_matrix(n_in: int, n_out: int, dtype) -> np.ndarray:
    key = ("bilinear", n_in, n_out, np.dtype(dtype).str)
    cached = _RESIZE_CACHE.get(key)
    if cached is not None:
        return cached
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    low = np.floor(src)
    frac = src - low
    i0 = np.clip(low, 0, n_in - 1).astype(np.int64)
    i1 = np.clip(low + 1, 0, n_in - 1).astype(np.int64)
    m = np.zeros((n_out, n_in), dtype=dtype)
    rows = np.arange(n_out)
    np.add.at(m, (rows, i0), (1.0 - frac).astype(dtype))
    np.add.at(m, (rows, i1), frac.astype(dtype))
    _RESIZE_CACHE[key] = m
    return m


def _nearest_matrix(n_in: int, n_out: int, dtype) -> np.ndarray:
    key = ("nearest", n_in, n_out, np.dtype(dtype).str)
    cached = _RESIZE_CACHE.get(key)
    if cached is not None:
        return cached
    idx = (np.arange(n_out) * n_in) // n_out
    m = np.zeros((n_out, n_in), dtype=dtype)
    m[np.arange(n_out), idx] = 1
    _RESIZE_CACHE[key] = m
    return m


def _resize_with(matrix_fn, x: Tensor, out_h: int, out_w: int, op: str) -> Tensor:
    _check_rank(x, 3, f"{op} input")
    if out_h < 1 or out_w < 1:
        raise DimensionError(f"{op} target must be at least 1x1, got {out_h}x{out_w}")
    _, h, w = x.dims
    rh = matrix_fn(h, out_h, x.dtype)
    rw = matrix_fn(w, out_w, x.dtype)
    out = rh @ x.data @ rw.T

    def bwd(g):
        if _need(x):
            _acc(x, rh.T @ g @ rw)

    return _make(out, (x,), op, bwd)


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Separable bilinear resampling (half-pixel centers, edge clamp)."""
    return _resize_with(_bilinear_matrix, x, out_h, out_w, "bilinear_resize")


def nearest_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    return _resize_with(_nearest_matrix, x, out_h, out_w, "nearest_resize")


def maxpool2x2(x: Tensor, out_h: int | None = None, out_w: int | None = None) -> Tensor:
    """2x2 max pooling with stride 2; edge windows are clipped.

    Target dims default to ceil(h/2) x ceil(w/2) and may be passed explicitly
    when the destination grid is already known (pyramid levels record theirs).
    """
    _check_rank(x, 3, "maxpool2x2 input")
    c, h, w = x.dims
    if out_h is None:
        out_h = (h + 1) // 2
    if out_w is None:
        out_w = (w + 1) // 2
    if out_h < 1 or out_w < 1:
        raise DimensionError(f"maxpool2x2 target must be at least 1x1, got {out_h}x{out_w}")
    if 2 * (out_h - 1) > h - 1 or 2 * (out_w - 1) > w - 1:
        raise DimensionError(
            f"maxpool2x2 target {out_h}x{out_w} too large for input {h}x{w}")

    r0 = 2 * np.arange(out_h)
    r1 = np.minimum(r0 + 1, h - 1)
    c0 = 2 * np.arange(out_w)
    c1 = np.minimum(c0 + 1, w - 1)
    # candidates in row-major window order so argmax ties pick the first
    cand = np.stack([
        x.data[:, r0[:, None], c0[None, :]],
        x.data[:, r0[:, None], c1[None, :]],
        x.data[:, r1[:, None], c0[None, :]],
        x.data[:, r1[:, None], c1[None, :]],
    ])
    k = np.argmax(cand, axis=0)
    out = np.take_along_axis(cand, k[None], axis=0)[0]
    rows = np.where(k < 2, r0[None, :, None], r1[None, :, None])
    cols = np.where(k % 2 == 0, c0[None, None, :], c1[None, None, :])

    def bwd(g):
        if _need(x):
            gx = np.zeros_like(x.data)
            ch = np.arange(c)[:, None, None]
            np.add.at(gx, (np.broadcast_to(ch, k.shape), rows, cols), g)
            _acc(x, gx)

    return _make(out, (x,), "maxpool2x2", bwd)


# ------------------------------------------------------------ shape movers

def concat_channels(tensors) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise DimensionError("concat_channels needs at least one input")
    for t in tensors:
        _check_rank(t, 3, "concat_channels input")
        if t.dims[1:] != tensors[0].dims[1:]:
            raise DimensionError(
                f"concat_channels spatial axes differ: {t.dims[1:]} vs {tensors[0].dims[1:]}")
    splits = np.cumsum([t.dims[0] for t in tensors])[:-1]
    out = np.concatenate([t.data for t in tensors], axis=0)

    def bwd(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=0)):
            if _need(t):
                _acc(t, piece)

    return _make(out, tuple(tensors), "concat_channels", bwd)


def reshape(x: Tensor, dims) -> Tensor:
    dims = tuple(int(d) for d in dims)

    def bwd(g):
        if _need(x):
            _acc(x, g.reshape(x.dims))

    return _make(x.data.reshape(dims), (x,), "reshape", bwd)


def transpose(x: Tensor) -> Tensor:
    _check_rank(x, 2, "transpose input")

    def bwd(g):
        if _need(x):
            _acc(x, g.T)

    return _make(x.data.T, (x,), "transpose", bwd)


# ------------------------------------------------------------ linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    _check_rank(a, 2, "matmul left operand")
    _check_rank(b, 2, "matmul right operand")
    if a.dims[1] != b.dims[0]:
        raise DimensionError(
            f"matmul inner axis: left has {a.dims[1]}, right has {b.dims[0]}")

    def bwd(g):
        if _need(a):
            _acc(a, g @ b.data.T)
        if _need(b):
            _acc(b, a.data.T @ g)

    return _make(a.data @ b.data, (a, b), "matmul", bwd)


def weighted_sum(coeffs: Tensor, tensors) -> Tensor:
    """sum_j coeffs[j] * tensors[j], differentiable in the coefficients too."""
    tensors = list(tensors)
    _check_rank(coeffs, 1, "weighted_sum coefficients")
    if coeffs.dims[0] != len(tensors):
        raise DimensionError(
            f"weighted_sum coefficient axis: {coeffs.dims[0]} coefficients for {len(tensors)} maps")
    for t in tensors:
        if t.dims != tensors[0].dims:
            raise DimensionError(
                f"weighted_sum map dims differ: {t.dims} vs {tensors[0].dims}")

    out = np.zeros_like(tensors[0].data)
    for c, t in zip(coeffs.data, tensors):
        out += c * t.data

    def bwd(g):
        for j, t in enumerate(tensors):
            if _need(t):
                _acc(t, coeffs.data[j] * g)
            if _need(coeffs):
                coeffs.ensure_grad()
                coeffs.grad[j] += np.sum(g * t.data)

    return _make(out, (coeffs, *tensors), "weighted_sum", bwd)


def scale_to_sum(x: Tensor, total: float) -> Tensor:
    """Rescale a vector so its entries sum to `total`.

    The current sum must be positive; out = x * total / sum(x).
    """
    _check_rank(x, 1, "scale_to_sum input")
    s = float(np.sum(x.data))
    if s <= 0.0:
        raise ValueError(f"scale_to_sum needs a positive current sum, got {s}")
    factor = total / s

    def bwd(g):
        if _need(x):
            inner = np.sum(g * x.data)
            _acc(x, factor * g - (total / (s * s)) * inner)

    return _make(x.data * factor, (x,), "scale_to_sum", bwd)


# ----------------------------------------------------------- reductions etc.

def global_avg_spatial(x: Tensor) -> Tensor:
    _check_rank(x, 3, "global_avg_spatial input")
    _, h, w = x.dims

    def bwd(g):
        if _need(x):
            _acc(x, np.broadcast_to(g[:, None, None], x.dims) / (h * w))

    return _make(x.data.mean(axis=(1, 2)), (x,), "global_avg_spatial", bwd)


def broadcast_add_channel(x: Tensor, v: Tensor) -> Tensor:
    """Add a per-channel vector to every spatial position."""
    _check_rank(x, 3, "broadcast_add_channel input")
    _check_rank(v, 1, "broadcast_add_channel vector")
    if v.dims[0] != x.dims[0]:
        raise DimensionError(
            f"broadcast_add_channel channel axis: map has {x.dims[0]}, vector has {v.dims[0]}")

    def bwd(g):
        if _need(x):
            _acc(x, g)
        if _need(v):
            _acc(v, g.sum(axis=(1, 2)))

    return _make(x.data + v.data[:, None, None], (x, v), "broadcast_add_channel", bwd)


def softmax_spatial(logits: Tensor) -> Tensor:
    """Per-channel softmax over all spatial positions (each channel sums to 1)."""
    _check_rank(logits, 3, "softmax_spatial input")
    shifted = logits.data - logits.data.max(axis=(1, 2), keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=(1, 2), keepdims=True)

    def bwd(g):
        if _need(logits):
            inner = (g * out).sum(axis=(1, 2), keepdims=True)
            _acc(logits, out * (g - inner))

    return _make(out, (logits,), "softmax_spatial", bwd)


def cross_entropy_logits(logits: Tensor, labels: np.ndarray, ignore_id: int = 255) -> Tensor:
    """Mean cross entropy of (classes, h, w) logits against integer labels.

    Pixels labelled ignore_id contribute nothing to the loss or gradient.
    """
    _check_rank(logits, 3, "cross_entropy input")
    labels = np.asarray(labels)
    num_classes, h, w = logits.dims
    if labels.shape != (h, w):
        raise DimensionError(
            f"cross_entropy label grid {labels.shape} does not match logits {h}x{w}")
    valid = labels != ignore_id
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise ValueError("cross_entropy: every pixel is ignored")
    safe = np.where(valid, labels, 0)
    if safe.min() < 0 or safe.max() >= num_classes:
        raise ValueError("cross_entropy: label id outside [0, num_classes)")

    shifted = logits.data - logits.data.max(axis=0, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=0))
    logp_true = np.take_along_axis(shifted, safe[None], axis=0)[0] - lse
    loss = -(logp_true[valid].sum()) / n_valid

    def bwd(g):
        if _need(logits):
            p = np.exp(shifted - lse[None])
            scale = (valid.astype(logits.dtype) * g) / n_valid
            gl = p * scale[None]
            ii, jj = np.indices((h, w))
            np.subtract.at(gl, (safe, ii, jj), scale)
            _acc(logits, gl)

    return _make(np.asarray(loss, dtype=logits.dtype), (logits,), "cross_entropy", bwd)
