"""Numeric kernels for every operator, on float32 numpy arrays.

Summation order in Conv2D and Dense is fixed (kernel-height, kernel-width,
then input-channel; input index for Dense) so results are bit-reproducible
and can be checked against scalar oracles with exact equality. Everything
accumulates in float32; the dtype argument exists so the training path can
rerun the same code in float64 for finite-difference checks.
"""
from __future__ import annotations

import numpy as np

from .graph import (
    PADDING_SAME,
    PADDING_VALID,
    RESIZE_BILINEAR,
    RESIZE_NEAREST,
    ShapeMismatch,
    conv2d_out_hw,
)


def same_pad_amounts(size: int, k: int, stride: int) -> tuple[int, int]:
    """Zeros added (before, after) one spatial axis; the odd zero goes after."""
    out = -(-size // stride)
    total = max((out - 1) * stride + k - size, 0)
    before = total // 2
    return before, total - before


def conv2d(x: np.ndarray, w: np.ndarray, bias: np.ndarray, strides: tuple[int, int],
           padding: int) -> np.ndarray:
    if x.ndim != 3 or w.ndim != 4:
        raise ShapeMismatch(f"conv2d wants HWC data and KKIO weights, got {x.shape} / {w.shape}")
    kh, kw, cin, cout = w.shape
    if x.shape[2] != cin:
        raise ShapeMismatch(f"conv2d channels {x.shape[2]} != weight Cin {cin}")
    if bias.shape != (cout,):
        raise ShapeMismatch(f"conv2d bias {bias.shape} != ({cout},)")
    sh, sw = strides
    h, wdt = x.shape[:2]
    oh, ow = conv2d_out_hw(h, wdt, kh, kw, sh, sw, padding)
    if oh <= 0 or ow <= 0:
        raise ShapeMismatch(f"conv2d output would be {oh}x{ow}")
    if padding == PADDING_SAME:
        top, bottom = same_pad_amounts(h, kh, sh)
        left, right = same_pad_amounts(wdt, kw, sw)
        xp = np.zeros((h + top + bottom, wdt + left + right, cin), dtype=x.dtype)
        xp[top : top + h, left : left + wdt] = x
    else:
        xp = x
    acc = np.zeros((oh, ow, cout), dtype=x.dtype)
    for ih in range(kh):
        for iw in range(kw):
            patch = xp[ih : ih + (oh - 1) * sh + 1 : sh, iw : iw + (ow - 1) * sw + 1 : sw]
            for c in range(cin):
                acc += patch[:, :, c : c + 1] * w[ih, iw, c]
    acc += bias
    return acc


def dense(x: np.ndarray, w: np.ndarray, bias: np.ndarray) -> np.ndarray:
    if x.ndim != 1 or w.ndim != 2 or x.shape[0] != w.shape[0]:
        raise ShapeMismatch(f"dense wants (In,) x (In,Out), got {x.shape} / {w.shape}")
    if bias.shape != (w.shape[1],):
        raise ShapeMismatch(f"dense bias {bias.shape} != ({w.shape[1]},)")
    acc = np.zeros(w.shape[1], dtype=x.dtype)
    for i in range(x.shape[0]):
        acc += x[i] * w[i]
    acc += bias
    return acc


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, x.dtype.type(0))


def sigmoid(x: np.ndarray) -> np.ndarray:
    return x.dtype.type(1) / (x.dtype.type(1) + np.exp(-x))


def softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - np.max(x))
    return e / np.sum(e)


def sign(x: np.ndarray) -> np.ndarray:
    return np.sign(x)


def max_pool2d(x: np.ndarray, window: tuple[int, int], strides: tuple[int, int]) -> np.ndarray:
    if x.ndim != 3:
        raise ShapeMismatch(f"max_pool2d wants HWC, got {x.shape}")
    kh, kw = window
    sh, sw = strides
    oh = (x.shape[0] - kh) // sh + 1
    ow = (x.shape[1] - kw) // sw + 1
    if oh <= 0 or ow <= 0:
        raise ShapeMismatch(f"max_pool2d output would be {oh}x{ow}")
    acc = np.full((oh, ow, x.shape[2]), -np.inf, dtype=x.dtype)
    for ih in range(kh):
        for iw in range(kw):
            patch = x[ih : ih + (oh - 1) * sh + 1 : sh, iw : iw + (ow - 1) * sw + 1 : sw]
            acc = np.maximum(acc, patch)
    return acc


def global_max_pool(x: np.ndarray) -> np.ndarray:
    if x.ndim != 3:
        raise ShapeMismatch(f"global_max_pool wants HWC, got {x.shape}")
    return np.max(x, axis=(0, 1), keepdims=True)


def broadcast(x: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if x.size == 1:
        return np.broadcast_to(x.reshape(()), shape).copy()
    if (
        x.ndim == 3 and x.shape[0] == x.shape[1] == 1
        and len(shape) == 3 and shape[2] == x.shape[2]
    ):
        return np.broadcast_to(x, shape).copy()
    raise ShapeMismatch(f"broadcast cannot splat {x.shape} to {shape}")


def concat(a: np.ndarray, b: np.ndarray, axis: int) -> np.ndarray:
    if a.ndim != b.ndim or axis >= a.ndim:
        raise ShapeMismatch(f"concat rank mismatch {a.shape} vs {b.shape} axis {axis}")
    return np.concatenate([a, b], axis=axis)


def _resize_src_coords(out_size: int, in_size: int) -> np.ndarray:
    """Half-pixel-center source coordinates, clamped to the valid range."""
    d = np.arange(out_size, dtype=np.float64)
    src = (d + 0.5) * (in_size / out_size) - 0.5
    return np.clip(src, 0.0, in_size - 1)


def resize(x: np.ndarray, size: tuple[int, int], mode: int) -> np.ndarray:
    if x.ndim != 3:
        raise ShapeMismatch(f"resize wants HWC, got {x.shape}")
    oh, ow = size
    if oh < 1 or ow < 1:
        raise ShapeMismatch(f"resize target {oh}x{ow} invalid")
    h, w = x.shape[:2]
    ys = _resize_src_coords(oh, h)
    xs = _resize_src_coords(ow, w)
    if mode == RESIZE_NEAREST:
        yi = np.clip(np.floor(ys + 0.5), 0, h - 1).astype(np.intp)
        xi = np.clip(np.floor(xs + 0.5), 0, w - 1).astype(np.intp)
        return x[yi][:, xi].copy()
    if mode != RESIZE_BILINEAR:
        raise ShapeMismatch(f"resize mode {mode} unknown")
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0).astype(x.dtype).reshape(-1, 1, 1)
    fx = (xs - x0).astype(x.dtype).reshape(1, -1, 1)
    # lerp as a + f*(b - a): exact on f=0 and on constant images
    top = x[y0][:, x0]
    top = top + fx * (x[y0][:, x1] - top)
    bot = x[y1][:, x0]
    bot = bot + fx * (x[y1][:, x1] - bot)
    return top + fy * (bot - top)
