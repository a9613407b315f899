"""Branchless conditional built from seven neural operators.

Computes y = (x > 0) ? a : b without any control flow, so it survives
compilation to a pure dataflow graph:

    mask   = broadcast(sign(relu(x)), shape(a))   # 1 when x > 0, else 0
    y      = a * mask + b * (1 - mask)

relu clamps negatives to 0 and sign(0) = 0, so the mask is exactly 0 or 1
and the unselected branch is multiplied away entirely: for finite operands
the result is bit-identical to the chosen input.
"""
from __future__ import annotations

from dataclasses import dataclass

from .graph import GraphBuilder, GraphError, Op, ShapeMismatch, infer_shapes
from .tensor import Tensor


class NameCollision(GraphError):
    pass


@dataclass(frozen=True)
class ConditionalHandle:
    x_in: str
    a_in: str
    b_in: str
    y_out: str
    node_names: tuple[str, ...]
    const_name: str


def build_conditional(b: GraphBuilder, x: str, a: str, b_in: str,
                      prefix: str = "cond_") -> ConditionalHandle:
    """Append the selector subgraph to a builder; returns the handle.

    x must produce a single element; a and b must produce equal shapes.
    Adds exactly 7 operator nodes plus one scalar Const holding 1.0.
    """
    shapes = infer_shapes(b.graph())
    for name in (x, a, b_in):
        if name not in shapes:
            raise GraphError(f"conditional input {name!r} not in graph")
    sx, sa, sb = shapes[x], shapes[a], shapes[b_in]
    n_x = 1
    for d in sx:
        n_x *= d
    if n_x != 1:
        raise ShapeMismatch(f"condition {x!r} has shape {sx}, need a single element")
    if sa != sb:
        raise ShapeMismatch(f"branch shapes differ: {a!r} is {sa}, {b_in!r} is {sb}")
    names = {
        "relu": prefix + "relu",
        "mask": prefix + "mask",
        "mask_full": prefix + "mask_full",
        "one": prefix + "one",
        "inv": prefix + "inv_mask",
        "sel_a": prefix + "take_a",
        "sel_b": prefix + "take_b",
        "y": prefix + "select",
    }
    for n in names.values():
        if b.has(n):
            raise NameCollision(f"node {n!r} already exists; pick another prefix")
    b.add(names["relu"], Op.ReLU, (x,))
    b.add(names["mask"], Op.Sign, (names["relu"],))
    b.add(names["mask_full"], Op.Broadcast, (names["mask"],), attrs={"shape": sa})
    b.const(names["one"], Tensor.scalar(1.0))
    b.add(names["inv"], Op.Sub, (names["one"], names["mask_full"]))
    b.add(names["sel_a"], Op.Mul, (a, names["mask_full"]))
    b.add(names["sel_b"], Op.Mul, (b_in, names["inv"]))
    b.add(names["y"], Op.Add, (names["sel_a"], names["sel_b"]))
    return ConditionalHandle(
        x_in=x,
        a_in=a,
        b_in=b_in,
        y_out=names["y"],
        node_names=(
            names["relu"], names["mask"], names["mask_full"], names["inv"],
            names["sel_a"], names["sel_b"], names["y"],
        ),
        const_name=names["one"],
    )
