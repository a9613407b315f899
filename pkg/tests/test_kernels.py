"""Kernel correctness against independently written scalar oracles.

Oracles here deliberately use plain Python loops and their own index math;
they share no padding or striding helpers with the package.
"""
import math

import numpy as np
import pytest

from modelgraft import kernels
from modelgraft.graph import (
    PADDING_SAME,
    PADDING_VALID,
    RESIZE_BILINEAR,
    RESIZE_NEAREST,
    ShapeMismatch,
)

f32 = np.float32


def conv2d_oracle(x, w, bias, sh, sw, padding):
    """Scalar convolution, float32 accumulator, kH -> kW -> Cin order."""
    h, wid, cin = x.shape
    kh, kw, _, cout = w.shape
    if padding == PADDING_SAME:
        oh = math.ceil(h / sh)
        ow = math.ceil(wid / sw)
        pad_h = max((oh - 1) * sh + kh - h, 0)
        pad_w = max((ow - 1) * sw + kw - wid, 0)
        top, left = pad_h // 2, pad_w // 2
    else:
        oh = (h - kh) // sh + 1
        ow = (wid - kw) // sw + 1
        top = left = 0
    out = np.zeros((oh, ow, cout), dtype=f32)
    for oy in range(oh):
        for ox in range(ow):
            for co in range(cout):
                acc = f32(0.0)
                for ih in range(kh):
                    for iw in range(kw):
                        for ci in range(cin):
                            y = oy * sh + ih - top
                            xx = ox * sw + iw - left
                            if 0 <= y < h and 0 <= xx < wid:
                                v = f32(x[y, xx, ci] * w[ih, iw, ci, co])
                            else:
                                v = f32(0.0)
                            acc = f32(acc + v)
                out[oy, ox, co] = f32(acc + bias[co])
    return out


def dense_oracle(x, w, bias):
    n, m = w.shape
    out = np.zeros(m, dtype=f32)
    for j in range(m):
        acc = f32(0.0)
        for i in range(n):
            acc = f32(acc + f32(x[i] * w[i, j]))
        out[j] = f32(acc + bias[j])
    return out


def test_relu_examples():
    got = kernels.relu(np.array([-1.0, 0.0, 2.5], dtype=f32))
    assert got.tolist() == [0.0, 0.0, 2.5]


def test_sign_examples():
    got = kernels.sign(np.array([-3.0, 0.0, 0.7], dtype=f32))
    assert got.tolist() == [-1.0, 0.0, 1.0]


def test_sign_of_relu_is_binary_mask():
    rng = np.random.default_rng(3)
    x = rng.normal(size=100).astype(f32)
    mask = kernels.sign(kernels.relu(x))
    assert set(np.unique(mask)) <= {0.0, 1.0}


def test_conv_identity_kernel():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(3, 3, 1)).astype(f32)
    w = np.ones((1, 1, 1, 1), dtype=f32)
    b = np.zeros(1, dtype=f32)
    got = kernels.conv2d(x, w, b, (1, 1), PADDING_VALID)
    assert np.array_equal(got, x)


def test_conv_sum_of_entries():
    x = np.array([[1, 2], [3, 4]], dtype=f32).reshape(2, 2, 1)
    w = np.ones((2, 2, 1, 1), dtype=f32)
    b = np.zeros(1, dtype=f32)
    got = kernels.conv2d(x, w, b, (1, 1), PADDING_VALID)
    assert got.shape == (1, 1, 1)
    assert got[0, 0, 0] == 10.0


def test_conv_same_padding_output_shape():
    x = np.ones((4, 4, 1), dtype=f32)
    w = np.ones((3, 3, 1, 2), dtype=f32)
    b = np.zeros(2, dtype=f32)
    got = kernels.conv2d(x, w, b, (2, 2), PADDING_SAME)
    assert got.shape == (2, 2, 2)
    assert np.array_equal(got, conv2d_oracle(x, w, b, 2, 2, PADDING_SAME))


def test_conv_8x8x3_bit_exact_vs_oracle():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(8, 8, 3)).astype(f32)
    w = rng.normal(size=(3, 3, 3, 4)).astype(f32)
    b = rng.normal(size=4).astype(f32)
    got = kernels.conv2d(x, w, b, (1, 1), PADDING_VALID)
    want = conv2d_oracle(x, w, b, 1, 1, PADDING_VALID)
    assert got.dtype == np.float32
    assert np.array_equal(got, want)


def test_conv_random_instances_bit_exact():
    rng = np.random.default_rng(11)
    for trial in range(100):
        h = int(rng.integers(2, 9))
        wid = int(rng.integers(2, 9))
        cin = int(rng.integers(1, 4))
        cout = int(rng.integers(1, 5))
        kh = int(rng.integers(1, min(h, 3) + 1))
        kw = int(rng.integers(1, min(wid, 3) + 1))
        sh = int(rng.integers(1, 3))
        sw = int(rng.integers(1, 3))
        padding = PADDING_SAME if rng.integers(0, 2) else PADDING_VALID
        if padding == PADDING_VALID and ((h - kh) // sh < 0 or (wid - kw) // sw < 0):
            continue
        x = rng.normal(size=(h, wid, cin)).astype(f32)
        w = rng.normal(size=(kh, kw, cin, cout)).astype(f32)
        b = rng.normal(size=cout).astype(f32)
        got = kernels.conv2d(x, w, b, (sh, sw), padding)
        want = conv2d_oracle(x, w, b, sh, sw, padding)
        assert np.array_equal(got, want), f"trial {trial}"


def test_dense_random_instances_bit_exact():
    rng = np.random.default_rng(13)
    for _ in range(100):
        n = int(rng.integers(1, 24))
        m = int(rng.integers(1, 12))
        x = rng.normal(size=n).astype(f32)
        w = rng.normal(size=(n, m)).astype(f32)
        b = rng.normal(size=m).astype(f32)
        assert np.array_equal(kernels.dense(x, w, b), dense_oracle(x, w, b))


def test_dense_identity():
    x = np.array([3.0, -2.0], dtype=f32)
    got = kernels.dense(x, np.eye(2, dtype=f32), np.zeros(2, dtype=f32))
    assert np.array_equal(got, x)


def test_global_max_pool_example():
    x = np.zeros((2, 2, 2), dtype=f32)
    x[:, :, 0] = [[1, 2], [3, 4]]
    x[:, :, 1] = [[5, 6], [7, 8]]
    got = kernels.global_max_pool(x)
    assert got.shape == (1, 1, 2)
    assert got.reshape(-1).tolist() == [4.0, 8.0]


def test_global_max_pool_constant():
    x = np.full((3, 5, 4), 0.25, dtype=f32)
    assert np.array_equal(kernels.global_max_pool(x).reshape(-1), np.full(4, 0.25, dtype=f32))


def test_global_max_pool_vs_oracle_and_permutation():
    rng = np.random.default_rng(17)
    x = rng.normal(size=(7, 7, 32)).astype(f32)
    want = np.array([x[:, :, c].max() for c in range(32)], dtype=f32).reshape(1, 1, 32)
    assert np.array_equal(kernels.global_max_pool(x), want)
    flat = x.reshape(49, 32)
    for _ in range(5):
        perm = rng.permutation(49)
        shuffled = flat[perm].reshape(7, 7, 32)
        assert np.array_equal(kernels.global_max_pool(shuffled), want)


def test_max_pool_vs_oracle():
    rng = np.random.default_rng(19)
    for _ in range(100):
        h = int(rng.integers(2, 9))
        w = int(rng.integers(2, 9))
        c = int(rng.integers(1, 4))
        kh = int(rng.integers(1, h + 1))
        kw = int(rng.integers(1, w + 1))
        sh = int(rng.integers(1, 3))
        sw = int(rng.integers(1, 3))
        x = rng.normal(size=(h, w, c)).astype(f32)
        got = kernels.max_pool2d(x, (kh, kw), (sh, sw))
        oh = (h - kh) // sh + 1
        ow = (w - kw) // sw + 1
        want = np.zeros((oh, ow, c), dtype=f32)
        for oy in range(oh):
            for ox in range(ow):
                for ch in range(c):
                    want[oy, ox, ch] = x[oy * sh : oy * sh + kh, ox * sw : ox * sw + kw, ch].max()
        assert np.array_equal(got, want)


def test_max_pool_identity_window():
    rng = np.random.default_rng(23)
    x = rng.normal(size=(4, 4, 2)).astype(f32)
    assert np.array_equal(kernels.max_pool2d(x, (1, 1), (1, 1)), x)


def test_softmax_properties_and_oracle():
    # logit gaps stay below ln(2^24) ~ 16.6; beyond that float32 rounds the
    # winning probability to exactly 1.0 and strict openness cannot hold
    rng = np.random.default_rng(29)
    for _ in range(100):
        x = (rng.normal(size=int(rng.integers(2, 16))) * 3).astype(f32)
        p = kernels.softmax(x)
        assert abs(p.sum() - 1.0) < 1e-6
        assert np.all(p > 0) and np.all(p < 1)
        e = np.exp(x.astype(np.float64) - x.astype(np.float64).max())
        want = e / e.sum()
        assert np.allclose(p, want, rtol=1e-6)


def test_sigmoid_oracle_and_monotonicity():
    rng = np.random.default_rng(31)
    x = np.sort(rng.normal(size=100).astype(f32) * 4)
    s = kernels.sigmoid(x)
    want = 1.0 / (1.0 + np.exp(-x.astype(np.float64)))
    assert np.allclose(s, want, rtol=1e-6)
    assert np.all(np.diff(s) >= 0)
    y = x + np.abs(rng.normal(size=100).astype(f32))
    assert np.all(kernels.relu(y) >= kernels.relu(x))
    assert np.all(kernels.sigmoid(y) >= kernels.sigmoid(x))


def test_sigmoid_half_at_zero():
    assert kernels.sigmoid(np.zeros(1, dtype=f32))[0] == 0.5


def test_broadcast_scalar_and_channelwise():
    got = kernels.broadcast(np.array([2.5], dtype=f32), (2, 3))
    assert np.array_equal(got, np.full((2, 3), 2.5, dtype=f32))
    ch = np.arange(3, dtype=f32).reshape(1, 1, 3)
    got = kernels.broadcast(ch, (4, 5, 3))
    for c in range(3):
        assert np.all(got[:, :, c] == c)
    with pytest.raises(ShapeMismatch):
        kernels.broadcast(np.zeros((2, 2), dtype=f32), (4, 4))


def test_concat_matches_numpy():
    rng = np.random.default_rng(37)
    a = rng.normal(size=(2, 3)).astype(f32)
    b = rng.normal(size=(2, 5)).astype(f32)
    assert np.array_equal(kernels.concat(a, b, 1), np.concatenate([a, b], axis=1))
    with pytest.raises(ShapeMismatch):
        kernels.concat(a, np.zeros((3,), dtype=f32), 0)


def bilinear_oracle(x, oh, ow):
    """Per-pixel bilinear resize with half-pixel centers, float32 lerp."""
    h, w, c = x.shape
    out = np.zeros((oh, ow, c), dtype=f32)
    for oy in range(oh):
        for ox in range(ow):
            sy = min(max((oy + 0.5) * (h / oh) - 0.5, 0.0), h - 1)
            sx = min(max((ox + 0.5) * (w / ow) - 0.5, 0.0), w - 1)
            y0, x0 = int(math.floor(sy)), int(math.floor(sx))
            y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
            fy, fx = f32(sy - y0), f32(sx - x0)
            for ch in range(c):
                t = f32(x[y0, x0, ch] + fx * f32(x[y0, x1, ch] - x[y0, x0, ch]))
                bm = f32(x[y1, x0, ch] + fx * f32(x[y1, x1, ch] - x[y1, x0, ch]))
                out[oy, ox, ch] = f32(t + fy * f32(bm - t))
    return out


def test_resize_identity():
    rng = np.random.default_rng(41)
    x = rng.uniform(size=(5, 7, 3)).astype(f32)
    assert np.array_equal(kernels.resize(x, (5, 7), RESIZE_BILINEAR), x)
    assert np.array_equal(kernels.resize(x, (5, 7), RESIZE_NEAREST), x)


def test_resize_constant_image():
    x = np.full((3, 4, 2), 0.625, dtype=f32)
    for size in [(1, 1), (2, 9), (10, 3)]:
        got = kernels.resize(x, size, RESIZE_BILINEAR)
        assert np.array_equal(got, np.full(size + (2,), 0.625, dtype=f32))


def test_resize_2x2_to_4x4_vs_scalar_oracle():
    x = np.array([[0, 1], [2, 3]], dtype=f32).reshape(2, 2, 1)
    got = kernels.resize(x, (4, 4), RESIZE_BILINEAR)
    want = bilinear_oracle(x, 4, 4)
    assert np.max(np.abs(got - want)) == 0.0


def test_resize_random_vs_scalar_oracle():
    rng = np.random.default_rng(43)
    for _ in range(100):
        h = int(rng.integers(1, 7))
        w = int(rng.integers(1, 7))
        c = int(rng.integers(1, 3))
        oh = int(rng.integers(1, 9))
        ow = int(rng.integers(1, 9))
        x = rng.uniform(size=(h, w, c)).astype(f32)
        got = kernels.resize(x, (oh, ow), RESIZE_BILINEAR)
        assert np.array_equal(got, bilinear_oracle(x, oh, ow))


def test_resize_nearest_picks_nearest_sample():
    x = np.array([[0, 10], [20, 30]], dtype=f32).reshape(2, 2, 1)
    got = kernels.resize(x, (4, 4), RESIZE_NEAREST)
    want = np.array(
        [[0, 0, 10, 10], [0, 0, 10, 10], [20, 20, 30, 30], [20, 20, 30, 30]], dtype=f32
    ).reshape(4, 4, 1)
    assert np.array_equal(got, want)


def test_conv_shape_errors():
    x = np.zeros((4, 4, 3), dtype=f32)
    w = np.zeros((3, 3, 2, 5), dtype=f32)
    with pytest.raises(ShapeMismatch):
        kernels.conv2d(x, w, np.zeros(5, dtype=f32), (1, 1), PADDING_VALID)
    w = np.zeros((3, 3, 3, 5), dtype=f32)
    with pytest.raises(ShapeMismatch):
        kernels.conv2d(x, w, np.zeros(4, dtype=f32), (1, 1), PADDING_VALID)
