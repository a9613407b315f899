"""Reverse-mode differentiation over model graphs.

The Tape runs a batched forward pass (leading batch axis on everything except
Const payloads) and then walks the graph backwards, producing gradients for
the trainable Const nodes. The forward math reuses the exact accumulation
order of the single-sample kernels, so per-sample values are bit-identical to
the reference interpreter: vectorizing across the batch axis only changes how
many independent elementwise operations run, never their order.

Cross-sample reductions (weight and bias gradients) are accumulated with an
explicit sequential loop over the batch, so the gradient of a batch equals
the gradient sum of its samples taken one at a time, bit for bit. That is the
fixed reduction order the training determinism contract leans on.
"""
from __future__ import annotations

import numpy as np

from .graph import (
    Graph,
    Op,
    PADDING_SAME,
    ShapeMismatch,
    conv2d_out_hw,
    find_io,
    topo_order,
)
from .kernels import same_pad_amounts
from .tensor import Tensor


class AutodiffError(ValueError):
    pass


class NonDifferentiableOp(AutodiffError):
    """Sign has zero derivative almost everywhere and none at 0; a graph that
    contains it cannot be trained."""


class UnsupportedForTraining(AutodiffError):
    """Op is executable but has no backward rule here (Softmax, Broadcast,
    Resize); detectors under training never need them."""


_DIFFERENTIABLE = {
    Op.Placeholder, Op.Const, Op.Conv2D, Op.Dense, Op.ReLU, Op.Sigmoid,
    Op.MaxPool2D, Op.GlobalMaxPool, Op.Concat, Op.Reshape,
    Op.Add, Op.Sub, Op.Mul,
}


def trainable_consts(g: Graph) -> list[str]:
    """Names of Const nodes acting as Conv2D/Dense weights or biases
    (slots 1 and 2), in topological order."""
    found = []
    seen = set()
    topo_pos = {idx: k for k, idx in enumerate(topo_order(g))}
    for node in g.nodes:
        if node.op not in (Op.Conv2D, Op.Dense):
            continue
        for arg, (src, _slot) in enumerate(node.inputs):
            if arg in (1, 2) and g.nodes[src].op == Op.Const:
                if src not in seen:
                    seen.add(src)
                    found.append(src)
    found.sort(key=lambda idx: topo_pos[idx])
    return [g.nodes[idx].name for idx in found]


def _check_differentiable(g: Graph):
    for node in g.nodes:
        if node.op == Op.Sign:
            raise NonDifferentiableOp(
                f"node {node.name!r} is Sign, which has no usable gradient"
            )
        if node.op not in _DIFFERENTIABLE:
            raise UnsupportedForTraining(
                f"node {node.name!r} ({node.op.name}) has no backward rule"
            )


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum g down to `shape`, undoing numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ts) in enumerate(zip(g.shape, shape)) if ts == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _conv_forward(x, w, b, strides, padding):
    kh, kw, cin, cout = w.shape
    sh, sw = strides
    n, h, wd = x.shape[:3]
    if x.shape[3] != cin:
        raise ShapeMismatch(f"conv channels {x.shape[3]} != weight Cin {cin}")
    oh, ow = conv2d_out_hw(h, wd, kh, kw, sh, sw, padding)
    if padding == PADDING_SAME:
        top, bottom = same_pad_amounts(h, kh, sh)
        left, right = same_pad_amounts(wd, kw, sw)
        xp = np.zeros((n, h + top + bottom, wd + left + right, cin), dtype=x.dtype)
        xp[:, top : top + h, left : left + wd] = x
    else:
        xp, top, left = x, 0, 0
    acc = np.zeros((n, oh, ow, cout), dtype=x.dtype)
    for ih in range(kh):
        for iw in range(kw):
            patch = xp[:, ih : ih + (oh - 1) * sh + 1 : sh, iw : iw + (ow - 1) * sw + 1 : sw]
            for c in range(cin):
                acc += patch[:, :, :, c : c + 1] * w[ih, iw, c]
    acc += b
    return acc, (xp, top, left)


def _conv_backward(dy, aux, w, strides, x_shape):
    xp, top, left = aux
    n = dy.shape[0]
    kh, kw, cin, cout = w.shape
    sh, sw = strides
    oh, ow = dy.shape[1:3]
    dxp = np.zeros_like(xp)
    dw = np.zeros_like(w)
    db = np.zeros(cout, dtype=dy.dtype)
    for k in range(n):
        db += dy[k].sum(axis=(0, 1))
    for ih in range(kh):
        hs = slice(ih, ih + (oh - 1) * sh + 1, sh)
        for iw in range(kw):
            ws = slice(iw, iw + (ow - 1) * sw + 1, sw)
            patch = xp[:, hs, ws]
            for k in range(n):
                dw[ih, iw] += patch[k].reshape(-1, cin).T @ dy[k].reshape(-1, cout)
            dxp[:, hs, ws] += np.matmul(dy, w[ih, iw].T)
    h, wd = x_shape
    dx = dxp[:, top : top + h, left : left + wd]
    return dx, dw, db


def _dense_forward(x, w, b):
    n_in, n_out = w.shape
    if x.shape[1] != n_in:
        raise ShapeMismatch(f"dense input {x.shape[1]} != weight In {n_in}")
    acc = np.zeros((x.shape[0], n_out), dtype=x.dtype)
    for i in range(n_in):
        acc += x[:, i : i + 1] * w[i]
    acc += b
    return acc


def _dense_backward(dy, x, w):
    dw = np.zeros_like(w)
    db = np.zeros(w.shape[1], dtype=dy.dtype)
    for k in range(x.shape[0]):
        db += dy[k]
        dw += x[k][:, None] * dy[k][None, :]
    dx = (dy[:, None, :] * w[None]).sum(axis=-1)
    return dx, dw, db


def _maxpool_forward(x, window, strides):
    kh, kw = window
    sh, sw = strides
    oh = (x.shape[1] - kh) // sh + 1
    ow = (x.shape[2] - kw) // sw + 1
    if oh <= 0 or ow <= 0:
        raise ShapeMismatch(f"max pool output would be {oh}x{ow}")
    acc = np.full((x.shape[0], oh, ow, x.shape[3]), -np.inf, dtype=x.dtype)
    for ih in range(kh):
        for iw in range(kw):
            patch = x[:, ih : ih + (oh - 1) * sh + 1 : sh, iw : iw + (ow - 1) * sw + 1 : sw]
            acc = np.maximum(acc, patch)
    return acc


def _maxpool_backward(dy, x, y, window, strides):
    """Each output cell sends its gradient to the first maximal element of
    its window in row-major scan order."""
    kh, kw = window
    sh, sw = strides
    oh, ow = dy.shape[1:3]
    dx = np.zeros_like(x)
    claimed = np.zeros(dy.shape, dtype=bool)
    for ih in range(kh):
        hs = slice(ih, ih + (oh - 1) * sh + 1, sh)
        for iw in range(kw):
            ws = slice(iw, iw + (ow - 1) * sw + 1, sw)
            hit = (x[:, hs, ws] == y) & ~claimed
            dx[:, hs, ws] += dy * hit
            claimed |= hit
    return dx


def _gmp_backward(dy, x):
    n, h, w, c = x.shape
    flat = x.reshape(n, h * w, c)
    first = np.argmax(flat, axis=1)
    dflat = np.zeros((n, h * w, c), dtype=dy.dtype)
    np.put_along_axis(dflat, first[:, None, :], dy.reshape(n, 1, c), axis=1)
    return dflat.reshape(x.shape)


class Tape:
    """One differentiable program: forward() computes and records every node
    value for a batch, backward() returns gradients for the trainable Consts.

    `params` optionally overrides Const payloads by node name; values are
    looked up at forward time so an optimizer can update them in place
    between steps. `dtype` selects the arithmetic width (float64 is used by
    the finite-difference checks, float32 everywhere else).
    """

    def __init__(self, graph: Graph, dtype=np.float32, params: dict | None = None):
        _check_differentiable(graph)
        self.graph = graph
        self.dtype = np.dtype(dtype)
        self.params = params if params is not None else {}
        self.io = find_io(graph)
        self.order = topo_order(graph)
        self.trainable = trainable_consts(graph)
        self._index = {n.name: i for i, n in enumerate(graph.nodes)}
        in_node = graph.nodes[graph.node_named(self.io.input_name)]
        self.input_shape = in_node.attrs["shape"]
        self.values: dict[int, np.ndarray] = {}
        self._aux: dict[int, object] = {}
        self.input_grad: np.ndarray | None = None

    def _const(self, idx: int) -> np.ndarray:
        node = self.graph.nodes[idx]
        arr = self.params.get(node.name)
        if arr is None:
            arr = node.const_value.array
        return np.asarray(arr, dtype=self.dtype)

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != len(self.input_shape) + 1 or x.shape[1:] != tuple(self.input_shape):
            raise ShapeMismatch(
                f"batch shape {x.shape} does not end in input shape {self.input_shape}"
            )
        g = self.graph
        self.values.clear()
        self._aux.clear()
        for idx in self.order:
            node = g.nodes[idx]
            if node.op == Op.Placeholder:
                self.values[idx] = x
                continue
            if node.op == Op.Const:
                self.values[idx] = self._const(idx)
                continue
            ins = [self.values[src] for src, _slot in node.inputs]
            if node.op == Op.Conv2D:
                out, aux = _conv_forward(ins[0], ins[1], ins[2],
                                         node.attrs["strides"], node.attrs["padding"])
                self._aux[idx] = aux
            elif node.op == Op.Dense:
                out = _dense_forward(ins[0], ins[1], ins[2])
            elif node.op == Op.ReLU:
                out = np.maximum(ins[0], self.dtype.type(0))
            elif node.op == Op.Sigmoid:
                out = self.dtype.type(1) / (self.dtype.type(1) + np.exp(-ins[0]))
            elif node.op == Op.MaxPool2D:
                out = _maxpool_forward(ins[0], node.attrs["window"], node.attrs["strides"])
            elif node.op == Op.GlobalMaxPool:
                out = np.max(ins[0], axis=(1, 2), keepdims=True)
            elif node.op == Op.Concat:
                out = np.concatenate([ins[0], ins[1]], axis=node.attrs["axis"] + 1)
            elif node.op == Op.Reshape:
                out = ins[0].reshape((x.shape[0],) + tuple(node.attrs["shape"]))
            elif node.op == Op.Add:
                out = ins[0] + ins[1]
            elif node.op == Op.Sub:
                out = ins[0] - ins[1]
            elif node.op == Op.Mul:
                out = ins[0] * ins[1]
            else:
                raise UnsupportedForTraining(node.op.name)
            self.values[idx] = out
        return self.values[self._index[self.io.output_name]]

    def backward(self, dy: np.ndarray) -> dict[str, np.ndarray]:
        if not self.values:
            raise AutodiffError("backward before forward")
        g = self.graph
        out_idx = self._index[self.io.output_name]
        dy = np.asarray(dy, dtype=self.dtype)
        if dy.shape != self.values[out_idx].shape:
            raise ShapeMismatch(
                f"loss gradient {dy.shape} != output {self.values[out_idx].shape}"
            )
        grads: dict[int, np.ndarray] = {out_idx: dy}

        def send(src: int, slot_grad: np.ndarray):
            if src in grads:
                grads[src] = grads[src] + slot_grad
            else:
                grads[src] = slot_grad

        for idx in reversed(self.order):
            node = g.nodes[idx]
            gout = grads.get(idx)
            if gout is None or node.op in (Op.Placeholder, Op.Const):
                continue
            srcs = [s for s, _slot in node.inputs]
            ins = [self.values[s] for s in srcs]
            if node.op == Op.Conv2D:
                dx, dw, db = _conv_backward(gout, self._aux[idx], ins[1],
                                            node.attrs["strides"], ins[0].shape[1:3])
                send(srcs[0], dx)
                send(srcs[1], dw)
                send(srcs[2], db)
            elif node.op == Op.Dense:
                dx, dw, db = _dense_backward(gout, ins[0], ins[1])
                send(srcs[0], dx)
                send(srcs[1], dw)
                send(srcs[2], db)
            elif node.op == Op.ReLU:
                send(srcs[0], gout * (ins[0] > 0))
            elif node.op == Op.Sigmoid:
                y = self.values[idx]
                send(srcs[0], gout * (y * (self.dtype.type(1) - y)))
            elif node.op == Op.MaxPool2D:
                send(srcs[0], _maxpool_backward(gout, ins[0], self.values[idx],
                                                node.attrs["window"], node.attrs["strides"]))
            elif node.op == Op.GlobalMaxPool:
                send(srcs[0], _gmp_backward(gout, ins[0]))
            elif node.op == Op.Concat:
                ax = node.attrs["axis"] + 1
                cut = ins[0].shape[ax]
                sl0 = [slice(None)] * gout.ndim
                sl0[ax] = slice(0, cut)
                sl1 = [slice(None)] * gout.ndim
                sl1[ax] = slice(cut, None)
                send(srcs[0], gout[tuple(sl0)])
                send(srcs[1], gout[tuple(sl1)])
            elif node.op == Op.Reshape:
                send(srcs[0], gout.reshape(ins[0].shape))
            elif node.op == Op.Add:
                send(srcs[0], _reduce_to(gout, ins[0].shape))
                send(srcs[1], _reduce_to(gout, ins[1].shape))
            elif node.op == Op.Sub:
                send(srcs[0], _reduce_to(gout, ins[0].shape))
                send(srcs[1], _reduce_to(-gout, ins[1].shape))
            elif node.op == Op.Mul:
                send(srcs[0], _reduce_to(gout * ins[1], ins[0].shape))
                send(srcs[1], _reduce_to(gout * ins[0], ins[1].shape))
        self.input_grad = grads.get(self._index[self.io.input_name])
        out = {}
        for name in self.trainable:
            idx = self._index[name]
            got = grads.get(idx)
            if got is None:
                got = np.zeros_like(self._const(idx))
            out[name] = got
        return out


def backward(graph: Graph, feeds: dict, loss_grad, dtype=np.float32) -> dict[str, Tensor]:
    """Single-sample gradient of every trainable Const.

    feeds maps the input placeholder name to its data; loss_grad is dL/dout
    with the output's shape. Convenience wrapper over Tape for callers that
    think in single samples rather than batches.
    """
    tape = Tape(graph, dtype=dtype)
    if set(feeds) != {tape.io.input_name}:
        raise AutodiffError(
            f"feeds must cover exactly {tape.io.input_name!r}, got {sorted(feeds)}"
        )
    x = feeds[tape.io.input_name]
    x = x.array if isinstance(x, Tensor) else np.asarray(x)
    dy = loss_grad.array if isinstance(loss_grad, Tensor) else np.asarray(loss_grad)
    tape.forward(x[None])
    grads = tape.backward(dy[None].astype(dtype))
    return {name: Tensor.f32(g.astype(np.float32)) for name, g in grads.items()}
