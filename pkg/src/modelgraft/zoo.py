"""Synthetic victim models: small random CNN classifiers.

Every model is a single-input single-output softmax classifier over
N_CLASSES classes with an HxWx3 F32 image input, which is exactly the
population inject() is built to handle. Architectures vary in depth,
kernel size, stride, channel width, pooling, and an optional hidden dense
layer, drawn deterministically from SeedSequence([seed, index]).
"""

from __future__ import annotations

import math

import numpy as np

from .graph import PADDING_SAME, Graph, GraphBuilder, Op
from .tensor import Tensor

N_CLASSES = 10
SIZES = (16, 24, 32, 48)


def _conv_block(b: GraphBuilder, rng, tag: str, x: str, h: int, c: int):
    k = int(rng.choice([1, 3, 5]))
    s = int(rng.choice([1, 1, 2]))
    cout = int(rng.integers(4, 13))
    w = rng.normal(0.0, math.sqrt(2.0 / (k * k * c)), (k, k, c, cout))
    bias = rng.normal(0.0, 0.01, cout)
    b.const(f"{tag}_w", Tensor.f32(w))
    b.const(f"{tag}_b", Tensor.f32(bias))
    b.add(tag, Op.Conv2D, (x, f"{tag}_w", f"{tag}_b"),
          {"strides": (s, s), "padding": PADDING_SAME})
    b.add(f"{tag}_r", Op.ReLU, (tag,))
    x, h = f"{tag}_r", -(-h // s)
    if h >= 4 and rng.random() < 0.5:
        b.add(f"{tag}_p", Op.MaxPool2D, (x,), {"window": (2, 2), "strides": (2, 2)})
        x, h = f"{tag}_p", (h - 2) // 2 + 1
    return x, h, cout


def _dense(b: GraphBuilder, rng, tag: str, x: str, n_in: int, n_out: int) -> str:
    w = rng.normal(0.0, math.sqrt(2.0 / n_in), (n_in, n_out))
    bias = rng.normal(0.0, 0.01, n_out)
    b.const(f"{tag}_w", Tensor.f32(w))
    b.const(f"{tag}_b", Tensor.f32(bias))
    b.add(tag, Op.Dense, (x, f"{tag}_w", f"{tag}_b"))
    return tag


def make_classifier(seed: int, index: int) -> Graph:
    """One random classifier, fully determined by (seed, index)."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
    size = int(rng.choice(SIZES))
    b = GraphBuilder()
    b.placeholder("image", (size, size, 3))
    x, h, c = "image", size, 3
    for i in range(int(rng.integers(1, 4))):
        x, h, c = _conv_block(b, rng, f"c{i}", x, h, c)
    b.add("gmp", Op.GlobalMaxPool, (x,))
    b.add("flat", Op.Reshape, ("gmp",), {"shape": (c,)})
    x, n = "flat", c
    if rng.random() < 0.4:
        hidden = int(rng.integers(8, 25))
        x = _dense(b, rng, "fc0", x, n, hidden)
        b.add("fc0_r", Op.ReLU, (x,))
        x, n = "fc0_r", hidden
    x = _dense(b, rng, "head", x, n, N_CLASSES)
    b.add("scores", Op.Softmax, (x,))
    b.mark_output("scores")
    return b.finish()


def make_heavy_victim(seed: int = 0) -> Graph:
    """A deliberately expensive classifier (above 60M ops per inference),
    for measuring payload overhead against a realistic workload."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 999]))
    b = GraphBuilder()
    b.placeholder("image", (64, 64, 3))
    plan = [(5, 32), (3, 32), (3, 48)]
    x, c = "image", 3
    for i, (k, cout) in enumerate(plan):
        w = rng.normal(0.0, math.sqrt(2.0 / (k * k * c)), (k, k, c, cout))
        bias = rng.normal(0.0, 0.01, cout)
        b.const(f"c{i}_w", Tensor.f32(w))
        b.const(f"c{i}_b", Tensor.f32(bias))
        b.add(f"c{i}", Op.Conv2D, (x, f"c{i}_w", f"c{i}_b"),
              {"strides": (1, 1), "padding": PADDING_SAME})
        b.add(f"c{i}_r", Op.ReLU, (f"c{i}",))
        x, c = f"c{i}_r", cout
    b.add("pool", Op.MaxPool2D, (x,), {"window": (2, 2), "strides": (2, 2)})
    b.add("gmp", Op.GlobalMaxPool, ("pool",))
    b.add("flat", Op.Reshape, ("gmp",), {"shape": (c,)})
    _dense(b, rng, "head", "flat", c, N_CLASSES)
    b.add("scores", Op.Softmax, ("head",))
    b.mark_output("scores")
    return b.finish()


def make_zoo(count: int, seed: int = 0) -> list[Graph]:
    return [make_classifier(seed, i) for i in range(count)]
