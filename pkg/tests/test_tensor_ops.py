"""Forward-pass oracles for the primitive operations.

Every derived expectation here is computed by an independent loop oracle or
a closed-form evaluation written directly in the test, never by calling the
library twice.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hgd import Tensor, DimensionError
from hgd import ops


def t(arr, grad=False):
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=grad)


# ---------------------------------------------------------------- conv1x1

def conv1x1_loop(x, w, b):
    c_out, c_in = w.shape
    _, h, wd = x.shape
    out = np.zeros((c_out, h, wd))
    for o in range(c_out):
        for i in range(h):
            for j in range(wd):
                acc = b[o]
                for c in range(c_in):
                    acc += w[o, c] * x[c, i, j]
                out[o, i, j] = acc
    return out


def test_conv1x1_identity():
    x = t(np.arange(2 * 3 * 4, dtype=np.float64).reshape(2, 3, 4))
    w = t(np.eye(2))
    b = t(np.zeros(2))
    out = ops.conv1x1(x, w, b)
    assert np.array_equal(out.data, x.data)


def test_conv1x1_zero_weight_bias_only():
    x = t(np.random.default_rng(0).normal(size=(2, 2, 2)))
    w = t(np.zeros((2, 2)))
    b = t([3.0, -1.0])
    out = ops.conv1x1(x, w, b)
    assert np.all(out.data[0] == 3.0)
    assert np.all(out.data[1] == -1.0)


def test_conv1x1_matches_loop_oracle():
    rng = np.random.default_rng(1)
    x = t(rng.normal(size=(3, 4, 5)))
    w = t(rng.normal(size=(2, 3)))
    b = t(rng.normal(size=2))
    out = ops.conv1x1(x, w, b)
    expect = conv1x1_loop(x.data, w.data, b.data)
    assert np.max(np.abs(out.data - expect)) <= 1e-12


def test_conv1x1_shape_mismatch_names_axis():
    x = t(np.zeros((3, 2, 2)))
    w = t(np.zeros((4, 5)))
    b = t(np.zeros(4))
    with pytest.raises(DimensionError, match="channel"):
        ops.conv1x1(x, w, b)


# ---------------------------------------------------------------- bilinear

def test_bilinear_constant_preserved():
    x = t(np.full((2, 3, 3), 7.25))
    out = ops.bilinear_resize(x, 5, 8)
    assert out.dims == (2, 5, 8)
    assert np.max(np.abs(out.data - 7.25)) <= 1e-12


def test_bilinear_one_pixel_upsample():
    x = t(np.full((1, 1, 1), 4.5))
    out = ops.bilinear_resize(x, 2, 2)
    assert np.array_equal(out.data, np.full((1, 2, 2), 4.5))


def test_bilinear_ramp_closed_form():
    # ramp (0,1,2,3) to length 7 under src = (dst+0.5)*in/out - 0.5, clamped:
    # src_j = (8j-3)/14, values clamp-interpolate to the frozen fractions below
    x = t(np.arange(4, dtype=np.float64).reshape(1, 1, 4))
    out = ops.bilinear_resize(x, 1, 7)
    expect = np.array([0.0, 5 / 14, 13 / 14, 21 / 14, 29 / 14, 37 / 14, 3.0])
    assert np.max(np.abs(out.data[0, 0] - expect)) <= 1e-12


def test_bilinear_identity_when_same_size():
    rng = np.random.default_rng(2)
    x = t(rng.normal(size=(2, 5, 6)))
    out = ops.bilinear_resize(x, 5, 6)
    assert np.array_equal(out.data, x.data)


def test_bilinear_rejects_zero_target():
    x = t(np.zeros((1, 2, 2)))
    with pytest.raises(DimensionError):
        ops.bilinear_resize(x, 0, 2)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 9), st.integers(1, 9))
def test_bilinear_linearity(h, w, oh, ow):
    rng = np.random.default_rng(h * 100 + w * 10 + oh + ow)
    x = rng.normal(size=(2, h, w))
    y = rng.normal(size=(2, h, w))
    a, b = 1.7, -0.3
    lhs = ops.bilinear_resize(t(a * x + b * y), oh, ow).data
    rhs = a * ops.bilinear_resize(t(x), oh, ow).data + b * ops.bilinear_resize(t(y), oh, ow).data
    assert np.max(np.abs(lhs - rhs)) <= 1e-10


# ---------------------------------------------------------------- softmax

def test_softmax_spatial_uniform():
    x = t(np.zeros((3, 2, 2)))
    out = ops.softmax_spatial(x)
    assert np.max(np.abs(out.data - 0.25)) <= 1e-15


def test_softmax_spatial_closed_form():
    x = t(np.array([[[0.0, np.log(3.0)]]]))
    out = ops.softmax_spatial(x)
    assert np.max(np.abs(out.data[0, 0] - np.array([0.25, 0.75]))) <= 1e-12


def test_softmax_spatial_shift_invariance():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(4, 3, 5))
    a = ops.softmax_spatial(t(x)).data
    b = ops.softmax_spatial(t(x + 5.0)).data
    assert np.max(np.abs(a - b)) <= 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.integers(1, 8), st.integers(0, 10_000))
def test_softmax_spatial_channels_sum_to_one(n, h, w, seed):
    logits = np.random.default_rng(seed).normal(scale=10.0, size=(n, h, w))
    out = ops.softmax_spatial(t(logits))
    sums = out.data.sum(axis=(1, 2))
    assert np.max(np.abs(sums - 1.0)) <= 1e-12


# ---------------------------------------------------------------- matmul

def matmul_loop(a, b):
    p, q = a.shape
    q2, r = b.shape
    out = np.zeros((p, r))
    for i in range(p):
        for k in range(r):
            for j in range(q):
                out[i, k] += a[i, j] * b[j, k]
    return out


def test_matmul_identity():
    m = np.random.default_rng(4).normal(size=(3, 3))
    out = ops.matmul(t(np.eye(3)), t(m))
    assert np.max(np.abs(out.data - m)) <= 1e-15


def test_matmul_ones_inner_product():
    q = 6
    out = ops.matmul(t(np.ones((1, q))), t(np.ones((q, 1))))
    assert out.data.shape == (1, 1)
    assert out.data[0, 0] == q


def test_matmul_matches_loop_oracle():
    rng = np.random.default_rng(5)
    a = rng.normal(size=(5, 4))
    b = rng.normal(size=(4, 3))
    out = ops.matmul(t(a), t(b))
    assert np.max(np.abs(out.data - matmul_loop(a, b))) <= 1e-12


def test_matmul_inner_mismatch():
    with pytest.raises(DimensionError):
        ops.matmul(t(np.zeros((2, 3))), t(np.zeros((4, 2))))


# ---------------------------------------------------------------- suite

def test_relu_values():
    out = ops.relu(t([-1.0, 0.0, 2.0]))
    assert np.array_equal(out.data, [0.0, 0.0, 2.0])


def test_concat_channels_order():
    a = t(np.ones((2, 3, 4)))
    b = t(np.full((3, 3, 4), 2.0))
    out = ops.concat_channels([a, b])
    assert out.dims == (5, 3, 4)
    assert np.all(out.data[:2] == 1.0) and np.all(out.data[2:] == 2.0)


def test_concat_channels_spatial_mismatch():
    with pytest.raises(DimensionError):
        ops.concat_channels([t(np.zeros((1, 2, 2))), t(np.zeros((1, 3, 2)))])


def test_add_and_scalar_scale():
    a = t([[1.0, 2.0]])
    b = t([[10.0, 20.0]])
    assert np.array_equal(ops.add(a, b).data, [[11.0, 22.0]])
    assert np.array_equal(ops.scalar_scale(a, -2.0).data, [[-2.0, -4.0]])


def test_weighted_sum_selector():
    rng = np.random.default_rng(6)
    maps = [t(rng.normal(size=(2, 3, 3))) for _ in range(3)]
    coeffs = t([1.0, 0.0, 0.0])
    out = ops.weighted_sum(coeffs, maps)
    assert np.array_equal(out.data, maps[0].data)


def test_weighted_sum_matches_loop():
    rng = np.random.default_rng(7)
    maps = [rng.normal(size=(2, 2, 2)) for _ in range(4)]
    cs = rng.normal(size=4)
    out = ops.weighted_sum(t(cs), [t(m) for m in maps])
    expect = sum(c * m for c, m in zip(cs, maps))
    assert np.max(np.abs(out.data - expect)) <= 1e-12


def test_nearest_resize_upsample():
    x = t(np.array([[[1.0, 2.0], [3.0, 4.0]]]))
    out = ops.nearest_resize(x, 4, 4)
    expect = np.array([[[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]]], dtype=np.float64)
    assert np.array_equal(out.data, expect)


def test_maxpool2x2_values_and_odd_edges():
    x = t(np.array([[[1.0, 2.0, 5.0],
                     [3.0, 4.0, 0.5],
                     [9.0, -1.0, 7.0]]]))
    out = ops.maxpool2x2(x)
    # ceil-mode: 3x3 -> 2x2, edge windows clipped
    expect = np.array([[[4.0, 5.0], [9.0, 7.0]]])
    assert np.array_equal(out.data, expect)


def test_maxpool2x2_explicit_target_dims():
    x = t(np.arange(16, dtype=np.float64).reshape(1, 4, 4))
    out = ops.maxpool2x2(x, out_h=2, out_w=2)
    assert np.array_equal(out.data, [[[5.0, 7.0], [13.0, 15.0]]])


def test_global_avg_spatial():
    x = t(np.array([[[1.0, 2.0], [3.0, 4.0]], [[10.0, 10.0], [10.0, 10.0]]]))
    out = ops.global_avg_spatial(x)
    assert out.dims == (2,)
    assert np.array_equal(out.data, [2.5, 10.0])


def test_broadcast_add_channel():
    x = t(np.zeros((2, 2, 2)))
    v = t([1.0, -2.0])
    out = ops.broadcast_add_channel(x, v)
    assert np.all(out.data[0] == 1.0) and np.all(out.data[1] == -2.0)


def test_reshape_and_transpose_roundtrip():
    x = t(np.arange(12, dtype=np.float64).reshape(3, 2, 2))
    flat = ops.reshape(x, (3, 4))
    assert flat.dims == (3, 4)
    tr = ops.transpose(flat)
    assert tr.dims == (4, 3)
    assert np.array_equal(tr.data, flat.data.T)


def test_mul_and_sum_all():
    a = t([[1.0, 2.0], [3.0, 4.0]])
    b = t([[2.0, 2.0], [2.0, 2.0]])
    prod = ops.mul(a, b)
    assert np.array_equal(prod.data, [[2.0, 4.0], [6.0, 8.0]])
    s = ops.sum_all(prod)
    assert s.dims == ()
    assert s.data == 20.0


# ------------------------------------------------------ cross entropy

def test_cross_entropy_uniform_logits():
    logits = t(np.zeros((4, 2, 2)), grad=True)
    labels = np.zeros((2, 2), dtype=np.int64)
    loss = ops.cross_entropy_logits(logits, labels)
    assert abs(loss.data - np.log(4.0)) <= 1e-12


def test_cross_entropy_ignores_255():
    logits = t(np.zeros((2, 1, 2)), grad=True)
    labels = np.array([[0, 255]], dtype=np.int64)
    loss = ops.cross_entropy_logits(logits, labels)
    assert abs(loss.data - np.log(2.0)) <= 1e-12


def test_cross_entropy_all_ignored_raises():
    logits = t(np.zeros((2, 1, 1)))
    labels = np.array([[255]], dtype=np.int64)
    with pytest.raises(ValueError):
        ops.cross_entropy_logits(logits, labels)


# ----------------------------------------------------------- conv3x3

def conv3x3_loop(x, w, b, stride):
    c_out, c_in, _, _ = w.shape
    _, h, wd = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    oh = (h + 2 - 3) // stride + 1
    ow = (wd + 2 - 3) // stride + 1
    out = np.zeros((c_out, oh, ow))
    for o in range(c_out):
        for i in range(oh):
            for j in range(ow):
                acc = b[o]
                for c in range(c_in):
                    for dy in range(3):
                        for dx in range(3):
                            acc += w[o, c, dy, dx] * xp[c, i * stride + dy, j * stride + dx]
                out[o, i, j] = acc
    return out


@pytest.mark.parametrize("stride", [1, 2])
def test_conv3x3_matches_loop_oracle(stride):
    rng = np.random.default_rng(8 + stride)
    x = t(rng.normal(size=(3, 5, 6)))
    w = t(rng.normal(size=(2, 3, 3, 3)))
    b = t(rng.normal(size=2))
    out = ops.conv3x3(x, w, b, stride=stride)
    expect = conv3x3_loop(x.data, w.data, b.data, stride)
    assert out.data.shape == expect.shape
    assert np.max(np.abs(out.data - expect)) <= 1e-12
