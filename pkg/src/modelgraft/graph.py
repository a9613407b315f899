"""In-memory operator graph: nodes, validation, shape inference.

A graph is a flat list of named nodes. Edges are (producer index, output slot)
pairs stored on the consumer; every op here produces a single output so the
slot is always 0, but the wire format reserves a byte for it and we keep it
in the model so round-trips are exact.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .tensor import DType, Tensor


class Op(IntEnum):
    Placeholder = 0
    Const = 1
    Conv2D = 2
    Dense = 3
    ReLU = 4
    Sigmoid = 5
    Softmax = 6
    Sign = 7
    Add = 8
    Sub = 9
    Mul = 10
    Reshape = 11
    Broadcast = 12
    Concat = 13
    MaxPool2D = 14
    GlobalMaxPool = 15
    Resize = 16


# Attribute wire types per op: "u32" and "f32" are scalars, "shape" is a
# tuple of u32 extents.
ATTR_SCHEMA: dict[Op, dict[str, str]] = {
    Op.Placeholder: {"dtype": "u32", "shape": "shape"},
    Op.Const: {},
    Op.Conv2D: {"strides": "shape", "padding": "u32"},
    Op.Dense: {},
    Op.ReLU: {},
    Op.Sigmoid: {},
    Op.Softmax: {},
    Op.Sign: {},
    Op.Add: {},
    Op.Sub: {},
    Op.Mul: {},
    Op.Reshape: {"shape": "shape"},
    Op.Broadcast: {"shape": "shape"},
    Op.Concat: {"axis": "u32"},
    Op.MaxPool2D: {"window": "shape", "strides": "shape"},
    Op.GlobalMaxPool: {},
    Op.Resize: {"size": "shape", "mode": "u32"},
}

ARITY: dict[Op, int] = {
    Op.Placeholder: 0,
    Op.Const: 0,
    Op.Conv2D: 3,  # data, weights (kH,kW,Cin,Cout), bias (Cout,)
    Op.Dense: 3,  # data, weights (In,Out), bias (Out,)
    Op.ReLU: 1,
    Op.Sigmoid: 1,
    Op.Softmax: 1,
    Op.Sign: 1,
    Op.Add: 2,
    Op.Sub: 2,
    Op.Mul: 2,
    Op.Reshape: 1,
    Op.Broadcast: 1,
    Op.Concat: 2,
    Op.MaxPool2D: 1,
    Op.GlobalMaxPool: 1,
    Op.Resize: 1,
}

PADDING_VALID = 0
PADDING_SAME = 1

RESIZE_NEAREST = 0
RESIZE_BILINEAR = 1


class GraphError(ValueError):
    pass


class ShapeMismatch(GraphError):
    pass


class UnknownRank(GraphError):
    pass


class TopologyError(GraphError):
    """Graph shape prevents treating it as a single-input single-output model."""


class NoInput(TopologyError):
    pass


class MultipleInputs(TopologyError):
    pass


class NoOutput(TopologyError):
    pass


class MultipleOutputs(TopologyError):
    pass


@dataclass(frozen=True)
class Node:
    name: str
    op: Op
    inputs: tuple[tuple[int, int], ...] = ()
    attrs: dict = field(default_factory=dict)
    const_value: Tensor | None = None


@dataclass
class Graph:
    nodes: list[Node] = field(default_factory=list)
    outputs: list[int] = field(default_factory=list)

    def node_named(self, name: str) -> int:
        for i, n in enumerate(self.nodes):
            if n.name == name:
                return i
        raise KeyError(name)

    def placeholders(self) -> list[int]:
        return [i for i, n in enumerate(self.nodes) if n.op == Op.Placeholder]

    def consumers(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in self.nodes]
        for i, n in enumerate(self.nodes):
            for src, _slot in n.inputs:
                if 0 <= src < len(self.nodes):
                    out[src].append(i)
        return out


@dataclass(frozen=True)
class Violation:
    kind: str
    node: str
    detail: str


def validate(g: Graph) -> list[Violation]:
    """Structural checks. Returns all violations rather than stopping at the first.

    The empty graph (no nodes, no outputs) is valid; every non-empty graph
    must declare exactly its sink nodes (outdegree 0) as outputs.
    """
    out: list[Violation] = []
    seen: dict[str, int] = {}
    for i, n in enumerate(g.nodes):
        if not n.name:
            out.append(Violation("EmptyName", f"#{i}", "node has empty name"))
        if n.name in seen:
            out.append(Violation("DuplicateName", n.name, f"also node #{seen[n.name]}"))
        else:
            seen[n.name] = i
        want = ARITY.get(n.op)
        if want is None:
            out.append(Violation("UnknownOp", n.name, f"opcode {int(n.op)}"))
            continue
        if len(n.inputs) != want:
            out.append(
                Violation(
                    "ArityMismatch", n.name, f"{n.op.name} wants {want} inputs, has {len(n.inputs)}"
                )
            )
        for src, slot in n.inputs:
            if not (0 <= src < len(g.nodes)):
                out.append(Violation("DanglingEdge", n.name, f"input index {src} out of range"))
            if slot != 0:
                out.append(Violation("BadSlot", n.name, f"slot {slot} (single-output ops only)"))
        if n.op == Op.Const and n.const_value is None:
            out.append(Violation("MissingConst", n.name, "Const node carries no tensor"))
        if n.op != Op.Const and n.const_value is not None:
            out.append(Violation("StrayConst", n.name, f"{n.op.name} node carries a tensor"))
        schema = ATTR_SCHEMA.get(n.op, {})
        for key in schema:
            if key not in n.attrs:
                out.append(Violation("MissingAttr", n.name, f"{n.op.name} needs attr '{key}'"))
        for key in n.attrs:
            if key not in schema:
                out.append(
                    Violation("UnknownAttr", n.name, f"'{key}' not valid for {n.op.name}")
                )
    for idx in g.outputs:
        if not (0 <= idx < len(g.nodes)):
            out.append(Violation("DanglingOutput", f"#{idx}", "output index out of range"))
    declared = {idx for idx in g.outputs if 0 <= idx < len(g.nodes)}
    cons = g.consumers()
    for i, n in enumerate(g.nodes):
        if not cons[i] and i not in declared:
            out.append(Violation("DanglingNode", n.name, "outdegree 0 but not a declared output"))
        if cons[i] and i in declared:
            feeds = ", ".join(g.nodes[c].name for c in cons[i][:3])
            out.append(Violation("NonSinkOutput", n.name, f"declared output feeds {feeds}"))
    cycle = _find_cycle(g)
    if cycle:
        names = ", ".join(g.nodes[i].name for i in cycle)
        out.append(Violation("CycleDetected", g.nodes[cycle[0]].name, f"cycle through {names}"))
    return out


def _find_cycle(g: Graph) -> list[int]:
    """Indices of the nodes on one cycle, or [] if the graph is acyclic."""
    color = [0] * len(g.nodes)  # 0 unvisited, 1 on stack, 2 done
    for start in range(len(g.nodes)):
        if color[start]:
            continue
        stack: list[tuple[int, int]] = [(start, 0)]
        color[start] = 1
        while stack:
            node, edge = stack[-1]
            ins = g.nodes[node].inputs
            if edge < len(ins):
                stack[-1] = (node, edge + 1)
                src = ins[edge][0]
                if not (0 <= src < len(g.nodes)):
                    continue
                if color[src] == 1:
                    path = [f[0] for f in stack]
                    return path[path.index(src):]
                if color[src] == 0:
                    color[src] = 1
                    stack.append((src, 0))
            else:
                color[node] = 2
                stack.pop()
    return []


def topo_order(g: Graph) -> list[int]:
    """Deterministic topological order: among ready nodes, lowest name first.

    This is the canonical serialization order, so byte-identical files come
    out of semantically identical graphs regardless of node-list permutation.
    """
    n = len(g.nodes)
    cons = g.consumers()
    indeg = [len(node.inputs) for node in g.nodes]
    ready = [(g.nodes[i].name, i) for i in range(n) if indeg[i] == 0]
    heapq.heapify(ready)
    order: list[int] = []
    while ready:
        _, i = heapq.heappop(ready)
        order.append(i)
        for c in cons[i]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(ready, (g.nodes[c].name, c))
    if len(order) != n:
        raise GraphError("cycle prevents topological ordering")
    return order


class GraphBuilder:
    """Append-only construction by name; resolves edges as they are added."""

    def __init__(self):
        self._graph = Graph()
        self._index: dict[str, int] = {}

    def add(self, name: str, op: Op, inputs: tuple[str, ...] = (), attrs: dict | None = None,
            const_value: Tensor | None = None) -> str:
        if name in self._index:
            raise GraphError(f"duplicate node name {name!r}")
        try:
            edges = tuple((self._index[i], 0) for i in inputs)
        except KeyError as e:
            raise GraphError(f"node {name!r} references unknown input {e.args[0]!r}") from None
        node = Node(name=name, op=op, inputs=edges, attrs=dict(attrs or {}),
                    const_value=const_value)
        self._index[name] = len(self._graph.nodes)
        self._graph.nodes.append(node)
        return name

    def has(self, name: str) -> bool:
        return name in self._index

    def graph(self) -> Graph:
        """The graph under construction; may not validate until finished."""
        return self._graph

    def placeholder(self, name: str, shape: tuple[int, ...], dtype: DType = DType.F32) -> str:
        return self.add(name, Op.Placeholder, attrs={"dtype": int(dtype), "shape": tuple(shape)})

    def const(self, name: str, value: Tensor) -> str:
        return self.add(name, Op.Const, const_value=value)

    def mark_output(self, name: str):
        self._graph.outputs.append(self._index[name])

    def finish(self, check: bool = True) -> Graph:
        g = self._graph
        if check:
            bad = validate(g)
            if bad:
                lines = "; ".join(f"{v.kind}@{v.node}: {v.detail}" for v in bad[:5])
                raise GraphError(f"invalid graph: {lines}")
        return g


def conv2d_out_hw(h: int, w: int, kh: int, kw: int, sh: int, sw: int,
                  padding: int) -> tuple[int, int]:
    if padding == PADDING_SAME:
        return (math.ceil(h / sh), math.ceil(w / sw))
    return ((h - kh) // sh + 1, (w - kw) // sw + 1)


def infer_shapes(g: Graph, input_shape: tuple[int, ...] | None = None) -> dict[str, tuple[int, ...]]:
    """Output shape of every node, keyed by node name.

    input_shape, when given, overrides the shape attr of the (then required
    to be unique) Placeholder. Raises ShapeMismatch or UnknownRank when an
    op cannot accept what its inputs produce.
    """
    if input_shape is not None:
        ph = g.placeholders()
        if len(ph) != 1:
            raise MultipleInputs(f"shape override needs exactly one placeholder, found {len(ph)}")
    shapes: list[tuple[int, ...]] = [()] * len(g.nodes)
    out: dict[str, tuple[int, ...]] = {}
    for i in topo_order(g):
        n = g.nodes[i]
        if n.op == Op.Placeholder and input_shape is not None:
            shapes[i] = tuple(input_shape)
        else:
            shapes[i] = _node_shape(n, [shapes[s] for s, _ in n.inputs])
        out[n.name] = shapes[i]
    return out


def _node_shape(n: Node, ins: list) -> tuple[int, ...]:
    op = n.op
    if op == Op.Placeholder:
        return tuple(n.attrs["shape"])
    if op == Op.Const:
        return n.const_value.shape
    if op == Op.Conv2D:
        x, w, b = ins
        if len(x) != 3 or len(w) != 4:
            raise UnknownRank(f"{n.name}: Conv2D wants HWC input and KKIO weights, got {x} / {w}")
        kh, kw, cin, cout = w
        if x[2] != cin:
            raise ShapeMismatch(f"{n.name}: input channels {x[2]} != weight Cin {cin}")
        if b != (cout,):
            raise ShapeMismatch(f"{n.name}: bias shape {b} != ({cout},)")
        sh, sw = n.attrs["strides"]
        oh, ow = conv2d_out_hw(x[0], x[1], kh, kw, sh, sw, n.attrs["padding"])
        if oh <= 0 or ow <= 0:
            raise ShapeMismatch(f"{n.name}: empty conv output {oh}x{ow}")
        return (oh, ow, cout)
    if op == Op.Dense:
        x, w, b = ins
        if len(x) != 1 or len(w) != 2:
            raise UnknownRank(f"{n.name}: Dense wants vector x matrix, got {x} / {w}")
        if x[0] != w[0]:
            raise ShapeMismatch(f"{n.name}: Dense inner dims {x[0]} != {w[0]}")
        if b != (w[1],):
            raise ShapeMismatch(f"{n.name}: bias shape {b} != ({w[1]},)")
        return (w[1],)
    if op in (Op.ReLU, Op.Sigmoid, Op.Softmax, Op.Sign):
        return ins[0]
    if op in (Op.Add, Op.Sub, Op.Mul):
        a, b = ins
        try:
            return tuple(int(d) for d in np.broadcast_shapes(a, b))
        except ValueError:
            raise ShapeMismatch(f"{n.name}: {op.name} operands {a} vs {b} do not broadcast") from None
    if op == Op.Reshape:
        target = tuple(n.attrs["shape"])
        if _count(ins[0]) != _count(target):
            raise ShapeMismatch(f"{n.name}: cannot reshape {ins[0]} to {target}")
        return target
    if op == Op.Broadcast:
        # two supported forms: single element -> any shape, 1x1xC -> HxWxC
        target = tuple(n.attrs["shape"])
        src = ins[0]
        if _count(src) == 1:
            return target
        if len(src) == 3 and src[0] == src[1] == 1 and len(target) == 3 and target[2] == src[2]:
            return target
        raise ShapeMismatch(f"{n.name}: Broadcast cannot splat {src} to {target}")
    if op == Op.Concat:
        a, b = ins
        axis = n.attrs["axis"]
        if len(a) != len(b) or axis >= len(a):
            raise UnknownRank(f"{n.name}: Concat rank mismatch {a} vs {b} axis {axis}")
        for d in range(len(a)):
            if d != axis and a[d] != b[d]:
                raise ShapeMismatch(f"{n.name}: Concat extents differ off-axis: {a} vs {b}")
        out = list(a)
        out[axis] = a[axis] + b[axis]
        return tuple(out)
    if op == Op.MaxPool2D:
        x = ins[0]
        if len(x) != 3:
            raise UnknownRank(f"{n.name}: MaxPool2D wants HWC input, got {x}")
        kh, kw = n.attrs["window"]
        sh, sw = n.attrs["strides"]
        oh = (x[0] - kh) // sh + 1
        ow = (x[1] - kw) // sw + 1
        if oh <= 0 or ow <= 0:
            raise ShapeMismatch(f"{n.name}: empty pool output {oh}x{ow}")
        return (oh, ow, x[2])
    if op == Op.GlobalMaxPool:
        x = ins[0]
        if len(x) != 3:
            raise UnknownRank(f"{n.name}: GlobalMaxPool wants HWC input, got {x}")
        return (1, 1, x[2])
    if op == Op.Resize:
        x = ins[0]
        if len(x) != 3:
            raise UnknownRank(f"{n.name}: Resize wants HWC input, got {x}")
        oh, ow = n.attrs["size"]
        return (oh, ow, x[2])
    raise GraphError(f"{n.name}: no shape rule for opcode {int(op)}")


def _count(shape: tuple[int, ...]) -> int:
    n = 1
    for d in shape:
        n *= d
    return n


@dataclass(frozen=True)
class IoSignature:
    input_name: str
    input_shape: tuple[int, ...]
    input_dtype: DType
    output_name: str
    output_shape: tuple[int, ...]


def find_io(g: Graph) -> IoSignature:
    """The single data input and single declared output.

    Const nodes also have indegree 0 but are weights, not inputs; only
    Placeholder counts. Raises one of the TopologyError kinds otherwise.
    """
    ph = g.placeholders()
    if not ph:
        raise NoInput("graph has no Placeholder node")
    if len(ph) > 1:
        names = [g.nodes[i].name for i in ph]
        raise MultipleInputs(f"{len(ph)} placeholders: {names}")
    if not g.outputs:
        raise NoOutput("graph declares no outputs")
    if len(g.outputs) > 1:
        names = [g.nodes[i].name for i in g.outputs]
        raise MultipleOutputs(f"{len(g.outputs)} outputs: {names}")
    pin = g.nodes[ph[0]]
    pout = g.nodes[g.outputs[0]]
    shapes = infer_shapes(g)
    return IoSignature(
        input_name=pin.name,
        input_shape=tuple(pin.attrs["shape"]),
        input_dtype=DType(pin.attrs["dtype"]),
        output_name=pout.name,
        output_shape=shapes[pout.name],
    )
