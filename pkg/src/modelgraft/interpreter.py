"""Reference executor: runs a graph on concrete tensors, counts scalar ops.

This is the ground truth everything else is checked against. It is direct
and slow on purpose; no fusion, no layout tricks, one kernel call per node
in topological order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .graph import (
    RESIZE_BILINEAR,
    Graph,
    GraphError,
    Op,
    ShapeMismatch,
    infer_shapes,
    topo_order,
)
from .tensor import DType, Tensor


class ExecutionError(GraphError):
    pass


class MissingFeed(ExecutionError):
    pass


class NonF32Execution(ExecutionError):
    """Graph or feed carries a dtype the executor does not run (int8 etc.)."""


@dataclass
class ExecutionTrace:
    outputs: dict[str, Tensor]
    node_values: dict[str, Tensor]
    node_ops: dict[str, int]

    def total_ops(self) -> int:
        return sum(self.node_ops.values())


def execute(g: Graph, feeds: dict[str, Tensor]) -> dict[str, Tensor]:
    return run_trace(g, feeds).outputs


def run_trace(g: Graph, feeds: dict[str, Tensor]) -> ExecutionTrace:
    values: list[np.ndarray] = [None] * len(g.nodes)
    node_values: dict[str, Tensor] = {}
    node_ops: dict[str, int] = {}
    for i in topo_order(g):
        n = g.nodes[i]
        if n.op == Op.Placeholder:
            if n.name not in feeds:
                raise MissingFeed(f"no feed for placeholder {n.name!r}")
            t = feeds[n.name]
            if t.dtype != DType.F32:
                raise NonF32Execution(f"feed {n.name!r} is {t.dtype.name}, executor runs F32 only")
            want = tuple(n.attrs["shape"])
            if t.shape != want:
                raise ShapeMismatch(f"feed {n.name!r} shape {t.shape} != placeholder {want}")
            arr = t.array
        elif n.op == Op.Const:
            t = n.const_value
            if t.dtype != DType.F32:
                raise NonF32Execution(f"const {n.name!r} is {t.dtype.name}, executor runs F32 only")
            arr = t.array
        else:
            ins = [values[s] for s, _ in n.inputs]
            arr = apply_op(n.op, n.attrs, ins)
        values[i] = arr
        out = Tensor(DType.F32, arr.shape, np.ascontiguousarray(arr).reshape(-1))
        node_values[n.name] = out
        node_ops[n.name] = _op_cost(n.op, n.attrs, arr.shape,
                                    [values[s].shape for s, _ in n.inputs])
    outputs = {g.nodes[i].name: node_values[g.nodes[i].name] for i in g.outputs}
    return ExecutionTrace(outputs=outputs, node_values=node_values, node_ops=node_ops)


def apply_op(op: Op, attrs: dict, ins: list[np.ndarray]) -> np.ndarray:
    if op == Op.Conv2D:
        return kernels.conv2d(ins[0], ins[1], ins[2], tuple(attrs["strides"]), attrs["padding"])
    if op == Op.Dense:
        return kernels.dense(ins[0], ins[1], ins[2])
    if op == Op.ReLU:
        return kernels.relu(ins[0])
    if op == Op.Sigmoid:
        return kernels.sigmoid(ins[0])
    if op == Op.Softmax:
        return kernels.softmax(ins[0])
    if op == Op.Sign:
        return kernels.sign(ins[0])
    if op == Op.Add:
        return ins[0] + ins[1]
    if op == Op.Sub:
        return ins[0] - ins[1]
    if op == Op.Mul:
        return ins[0] * ins[1]
    if op == Op.Reshape:
        return ins[0].reshape(tuple(attrs["shape"]))
    if op == Op.Broadcast:
        return kernels.broadcast(ins[0], tuple(attrs["shape"]))
    if op == Op.Concat:
        return kernels.concat(ins[0], ins[1], attrs["axis"])
    if op == Op.MaxPool2D:
        return kernels.max_pool2d(ins[0], tuple(attrs["window"]), tuple(attrs["strides"]))
    if op == Op.GlobalMaxPool:
        return kernels.global_max_pool(ins[0])
    if op == Op.Resize:
        return kernels.resize(ins[0], tuple(attrs["size"]), attrs["mode"])
    raise ExecutionError(f"no kernel for {op.name}")


def _count(shape) -> int:
    n = 1
    for d in shape:
        n *= d
    return n


def _op_cost(op: Op, attrs: dict, out_shape, in_shapes) -> int:
    """Scalar-operation cost model. Conv2D and Dense count multiply+add pairs
    as 2 ops each; elementwise ops cost one per output element; structural
    ops (Reshape) are free."""
    if op in (Op.Placeholder, Op.Const, Op.Reshape):
        return 0
    if op == Op.Conv2D:
        kh, kw, cin, _ = in_shapes[1]
        return 2 * kh * kw * cin * _count(out_shape)
    if op == Op.Dense:
        inn, out = in_shapes[1]
        return 2 * inn * out
    if op in (Op.ReLU, Op.Sigmoid, Op.Sign, Op.Add, Op.Sub, Op.Mul, Op.Broadcast, Op.Concat):
        return _count(out_shape)
    if op == Op.Softmax:
        return 4 * _count(out_shape)
    if op == Op.MaxPool2D:
        kh, kw = attrs["window"]
        return kh * kw * _count(out_shape)
    if op == Op.GlobalMaxPool:
        return _count(in_shapes[0])
    if op == Op.Resize:
        per = 8 if attrs["mode"] == RESIZE_BILINEAR else 1
        return per * _count(out_shape)
    raise ExecutionError(f"no cost rule for {op.name}")


def count_ops(g: Graph, input_shape: tuple[int, ...] | None = None) -> int:
    """Total scalar operations for one inference pass, from shapes alone."""
    shapes = infer_shapes(g, input_shape)
    total = 0
    for n in g.nodes:
        out_shape = shapes[n.name]
        in_shapes = [shapes[g.nodes[s].name] for s, _ in n.inputs]
        total += _op_cost(n.op, n.attrs, out_shape, in_shapes)
    return total
