"""Graft a trigger detector and output-swapping selector into a compiled model.

The attack works on serialized graphs alone: decode, splice the payload in
front of the victim's output, re-encode. The victim's own nodes (weights
included) are carried over byte for byte, so the clean-path behaviour of the
patched model is bit-identical to the original whenever the detector score
stays at or below the threshold.

Payload layout, in wiring order:

    victim input --[optional affine]--> Resize --> detector body --> g
    margin = Sub(g, threshold)
    y      = conditional(margin, target_const, original_output)

The original output node is renamed out of the way and the conditional's
final Add takes over its exact name, so downstream consumers of the model
see the same I/O signature as before.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .graph import (
    RESIZE_BILINEAR,
    Graph,
    GraphBuilder,
    GraphError,
    MultipleInputs,
    MultipleOutputs,
    NoInput,
    NoOutput,
    Op,
    ShapeMismatch,
    find_io,
    infer_shapes,
    topo_order,
    validate,
)
from .conditional import build_conditional
from .interpreter import count_ops
from .nnir import decode, encode
from .tensor import DType, Tensor


class InjectionError(ValueError):
    """Base for everything inject() can reject."""


class UnsupportedModelInput(InjectionError):
    """Victim input is not a rank-3 HWC image with 3 channels."""


class IncompatibleDataType(InjectionError):
    """Victim input placeholder is not F32."""


class MultipleIO(InjectionError):
    """Victim has more than one placeholder or declared output."""


@dataclass(frozen=True)
class PayloadSpec:
    """Everything the attack needs besides the victim itself.

    detector: single-input single-output graph mapping an HxWx3 image to a
        score in [0, 1]. Its input edge length fixes the Resize target.
    target_output: tensor emitted when the detector fires. Shape must match
        the victim's output exactly.
    threshold: the trigger decision is strict, score > threshold.
    input_scale / input_offset: affine map applied to the victim input
        before the Resize, for victims whose pixel convention differs from
        the detector's training data. Identity by default, in which case no
        extra nodes are spent on it.
    """

    detector: Graph
    target_output: Tensor
    threshold: float = 0.5
    input_scale: float = 1.0
    input_offset: float = 0.0

    def check(self) -> tuple[int, int]:
        """Validate fields; returns the detector input (height, width)."""
        if not 0.0 < self.threshold < 1.0:
            raise InjectionError(f"threshold {self.threshold} outside (0, 1)")
        if self.target_output.dtype != DType.F32:
            raise IncompatibleDataType("target tensor must be F32")
        bad = validate(self.detector)
        if bad:
            first = bad[0]
            raise InjectionError(f"detector graph invalid: {first.kind}@{first.node}")
        io = find_io(self.detector)
        ph = self.detector.nodes[self.detector.node_named(io.input_name)]
        shape = tuple(ph.attrs["shape"])
        if len(shape) != 3 or shape[2] != 3:
            raise InjectionError(f"detector input {shape} is not HxWx3")
        shapes = infer_shapes(self.detector)
        out = shapes[io.output_name]
        n = 1
        for d in out:
            n *= d
        if n != 1:
            raise InjectionError(f"detector output {out} is not a single score")
        return shape[0], shape[1]


@dataclass(frozen=True)
class InjectionReport:
    nodes_added: int
    payload_ops: int
    prefix: str
    output_name: str
    renamed_original: str
    added_nodes: tuple[str, ...]
    victim_input_shape: tuple[int, ...]
    detector_input_hw: tuple[int, int]
    threshold: float


def make_target(output_shape, target, confidence: float = 0.99) -> Tensor:
    """Build the tensor the payload substitutes for the real output.

    target may be a ready-made Tensor (passed through after a shape check)
    or a class index, in which case the result puts `confidence` on that
    class and spreads the remainder evenly over the others.
    """
    shape = tuple(int(d) for d in output_shape)
    if isinstance(target, Tensor):
        if target.shape != shape:
            raise ShapeMismatch(f"target shape {target.shape} != output {shape}")
        if target.dtype != DType.F32:
            raise IncompatibleDataType("target tensor must be F32")
        return target
    idx = int(target)
    if len(shape) != 1 or shape[0] < 2:
        raise ShapeMismatch(f"class-index targets need a score vector of >=2, got {shape}")
    n = shape[0]
    if not 0 <= idx < n:
        raise ShapeMismatch(f"class index {idx} out of range for {n} classes")
    if not 0.0 < confidence <= 1.0:
        raise InjectionError(f"confidence {confidence} outside (0, 1]")
    rest = (1.0 - confidence) / (n - 1)
    v = np.full(n, rest, dtype=np.float32)
    v[idx] = np.float32(confidence)
    return Tensor.f32(v)


def _fresh_prefix(taken: set[str]) -> str:
    k = 0
    while any(name.startswith(f"__dp_{k}_") for name in taken):
        k += 1
    return f"__dp_{k}_"


def _fresh_rename(base: str, taken: set[str]) -> str:
    cand = base + "__orig"
    k = 2
    while cand in taken:
        cand = f"{base}__orig{k}"
        k += 1
    return cand


def inject(model_bytes: bytes, spec: PayloadSpec) -> tuple[bytes, InjectionReport]:
    """Return (patched model bytes, report). The input bytes are the only
    thing read from the victim; no side information is used."""
    det_h, det_w = spec.check()
    victim = decode(model_bytes)
    try:
        io = find_io(victim)
    except (MultipleInputs, MultipleOutputs) as e:
        raise MultipleIO(str(e)) from None
    except (NoInput, NoOutput) as e:
        raise UnsupportedModelInput(str(e)) from None

    ph = victim.nodes[victim.node_named(io.input_name)]
    in_dtype = DType(ph.attrs["dtype"])
    if in_dtype != DType.F32:
        raise IncompatibleDataType(f"victim input dtype {in_dtype.name}, need F32")
    in_shape = tuple(ph.attrs["shape"])
    if len(in_shape) != 3 or in_shape[2] != 3:
        raise UnsupportedModelInput(f"victim input shape {in_shape} is not HxWx3")

    victim_shapes = infer_shapes(victim)
    out_shape = victim_shapes[io.output_name]
    if out_shape != spec.target_output.shape:
        raise ShapeMismatch(
            f"target shape {spec.target_output.shape} != victim output {out_shape}")

    taken = {n.name for n in victim.nodes}
    pfx = _fresh_prefix(taken)
    renamed = _fresh_rename(io.output_name, taken)

    b = GraphBuilder()
    out_idx = victim.outputs[0]
    new_names = [renamed if i == out_idx else n.name for i, n in enumerate(victim.nodes)]
    for i in topo_order(victim):
        n = victim.nodes[i]
        b.add(new_names[i], n.op, tuple(new_names[s] for s, _ in n.inputs),
              n.attrs, n.const_value)

    added: list[str] = []

    def padd(name, op, inputs=(), attrs=None, const_value=None):
        b.add(name, op, inputs, attrs, const_value)
        added.append(name)

    tap = io.input_name
    if spec.input_scale != 1.0:
        padd(pfx + "scale", Op.Const, const_value=Tensor.scalar(spec.input_scale))
        padd(pfx + "scaled", Op.Mul, (tap, pfx + "scale"))
        tap = pfx + "scaled"
    if spec.input_offset != 0.0:
        padd(pfx + "offset", Op.Const, const_value=Tensor.scalar(spec.input_offset))
        padd(pfx + "shifted", Op.Add, (tap, pfx + "offset"))
        tap = pfx + "shifted"

    padd(pfx + "resize", Op.Resize, (tap,),
         {"size": (det_h, det_w), "mode": RESIZE_BILINEAR})

    det = spec.detector
    det_ph = det.node_named(find_io(det).input_name)
    det_out = det.outputs[0]
    det_names: dict[int, str] = {det_ph: pfx + "resize"}
    for i in topo_order(det):
        if i == det_ph:
            continue
        n = det.nodes[i]
        det_names[i] = pfx + n.name
        padd(det_names[i], n.op, tuple(det_names[s] for s, _ in n.inputs),
             n.attrs, n.const_value)

    padd(pfx + "tau", Op.Const, const_value=Tensor.scalar(spec.threshold))
    padd(pfx + "margin", Op.Sub, (det_names[det_out], pfx + "tau"))
    padd(pfx + "payload", Op.Const, const_value=spec.target_output)

    handle = build_conditional(b, pfx + "margin", pfx + "payload", renamed,
                               prefix=pfx + "cond_")
    added.append(handle.const_name)
    added.extend(handle.node_names[:-1])

    g2 = b.graph()
    sel = g2.node_named(handle.y_out)
    g2.nodes[sel] = dataclasses.replace(g2.nodes[sel], name=io.output_name)
    g2.outputs = [sel]
    added.append(io.output_name)

    bad = validate(g2)
    if bad:
        first = bad[0]
        raise GraphError(f"patched graph invalid: {first.kind}@{first.node}")

    report = InjectionReport(
        nodes_added=len(added),
        payload_ops=count_ops(g2) - count_ops(victim),
        prefix=pfx,
        output_name=io.output_name,
        renamed_original=renamed,
        added_nodes=tuple(added),
        victim_input_shape=in_shape,
        detector_input_hw=(det_h, det_w),
        threshold=spec.threshold,
    )
    return encode(g2), report
