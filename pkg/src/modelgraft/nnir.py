"""Binary serialization of operator graphs.

Layout (all integers little-endian):

    magic   4 bytes  "NNIR"
    version u16      currently 1
    count   u32      number of nodes
    nodes   count records, each:
        name_len u16, name UTF-8
        opcode   u16
        n_in     u8, then n_in x (node_index u32, slot u8)
        n_attr   u8, then n_attr x (key_len u8, key UTF-8, tag u8, payload)
            tag 0: u32 scalar (4 bytes)
            tag 1: f32 scalar (4 bytes)
            tag 2: shape (rank u8, rank x u32)
        const payload, only when opcode == Const:
            dtype u8, rank u8, rank x u32 dims, raw scalars
    n_out  u32, then n_out x u32 node indices

Encoding is canonical: nodes are emitted in deterministic topological order
(lowest name first among ready nodes), attribute keys sorted, so equal graphs
produce equal bytes no matter how their node lists were permuted in memory.
"""
from __future__ import annotations

import struct
from io import BytesIO

from .graph import ATTR_SCHEMA, Graph, Node, Op, topo_order, validate
from .tensor import DType, Tensor

MAGIC = b"NNIR"
VERSION = 1

_ATTR_U32 = 0
_ATTR_F32 = 1
_ATTR_SHAPE = 2

_DTYPE_SIZES = {DType.F32: 4, DType.I8: 1, DType.I16: 2, DType.I32: 4}


class ModelDecodingError(ValueError):
    """Base for every way a byte stream can fail to become a graph."""


class BadMagic(ModelDecodingError):
    pass


class UnsupportedVersion(ModelDecodingError):
    pass


class UnknownOpcode(ModelDecodingError):
    pass


class TruncatedStream(ModelDecodingError):
    pass


class DanglingEdge(ModelDecodingError):
    """Edge or output index references a node the stream never defines."""


class MalformedNode(ModelDecodingError):
    pass


class InvalidStructure(ModelDecodingError):
    """Bytes parsed, but the resulting graph fails validation."""


def encode(g: Graph) -> bytes:
    bad = validate(g)
    if bad:
        first = bad[0]
        raise InvalidStructure(f"refusing to encode: {first.kind} at {first.node}: {first.detail}")
    order = topo_order(g)
    remap = {old: new for new, old in enumerate(order)}
    out = BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<HI", VERSION, len(g.nodes)))
    for old in order:
        _write_node(out, g.nodes[old], remap)
    out.write(struct.pack("<I", len(g.outputs)))
    for idx in g.outputs:
        out.write(struct.pack("<I", remap[idx]))
    return out.getvalue()


def _write_node(out: BytesIO, n: Node, remap: dict[int, int]):
    name = n.name.encode("utf-8")
    out.write(struct.pack("<H", len(name)))
    out.write(name)
    out.write(struct.pack("<H", int(n.op)))
    out.write(struct.pack("<B", len(n.inputs)))
    for src, slot in n.inputs:
        out.write(struct.pack("<IB", remap[src], slot))
    keys = sorted(n.attrs)
    out.write(struct.pack("<B", len(keys)))
    schema = ATTR_SCHEMA[n.op]
    for key in keys:
        kb = key.encode("utf-8")
        out.write(struct.pack("<B", len(kb)))
        out.write(kb)
        kind = schema[key]
        val = n.attrs[key]
        if kind == "u32":
            out.write(struct.pack("<BI", _ATTR_U32, int(val)))
        elif kind == "f32":
            out.write(struct.pack("<Bf", _ATTR_F32, float(val)))
        else:
            dims = tuple(int(d) for d in val)
            out.write(struct.pack("<BB", _ATTR_SHAPE, len(dims)))
            for d in dims:
                out.write(struct.pack("<I", d))
    if n.op == Op.Const:
        t = n.const_value
        out.write(struct.pack("<BB", int(t.dtype), len(t.shape)))
        for d in t.shape:
            out.write(struct.pack("<I", d))
        out.write(t.tobytes())


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedStream(
                f"stream ends inside {what} (wanted {n} bytes at offset {self.pos})"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(size, what))


def decode(data: bytes) -> Graph:
    r = _Reader(data)
    if r.take(4, "magic") != MAGIC:
        raise BadMagic("stream does not start with NNIR magic")
    (version,) = r.unpack("<H", "version")
    if version != VERSION:
        raise UnsupportedVersion(f"version {version}, this reader handles {VERSION}")
    (count,) = r.unpack("<I", "node count")
    nodes: list[Node] = []
    for i in range(count):
        nodes.append(_read_node(r, i, count))
    (n_out,) = r.unpack("<I", "output count")
    outputs = []
    for _ in range(n_out):
        (idx,) = r.unpack("<I", "output index")
        if idx >= count:
            raise DanglingEdge(f"output index {idx} out of range for {count} nodes")
        outputs.append(idx)
    if r.pos != len(data):
        raise MalformedNode(f"{len(data) - r.pos} trailing bytes after outputs")
    g = Graph(nodes=nodes, outputs=outputs)
    bad = validate(g)
    if bad:
        first = bad[0]
        raise InvalidStructure(f"{first.kind} at {first.node}: {first.detail}")
    return g


def _read_node(r: _Reader, index: int, count: int) -> Node:
    (name_len,) = r.unpack("<H", f"node {index} name length")
    raw = r.take(name_len, f"node {index} name")
    try:
        name = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise MalformedNode(f"node {index} name is not UTF-8: {e}") from None
    (opcode,) = r.unpack("<H", f"node {name!r} opcode")
    try:
        op = Op(opcode)
    except ValueError:
        raise UnknownOpcode(f"node {name!r} has opcode {opcode:#06x}") from None
    (n_in,) = r.unpack("<B", f"node {name!r} input count")
    inputs = []
    for _ in range(n_in):
        src, slot = r.unpack("<IB", f"node {name!r} edge")
        if src >= count:
            raise DanglingEdge(f"node {name!r} references node {src} of {count}")
        inputs.append((src, slot))
    (n_attr,) = r.unpack("<B", f"node {name!r} attr count")
    attrs = {}
    for _ in range(n_attr):
        (key_len,) = r.unpack("<B", f"node {name!r} attr key length")
        key = r.take(key_len, f"node {name!r} attr key").decode("utf-8", errors="replace")
        (tag,) = r.unpack("<B", f"attr {key!r} tag")
        if tag == _ATTR_U32:
            (val,) = r.unpack("<I", f"attr {key!r} value")
            attrs[key] = val
        elif tag == _ATTR_F32:
            (val,) = r.unpack("<f", f"attr {key!r} value")
            attrs[key] = val
        elif tag == _ATTR_SHAPE:
            (rank,) = r.unpack("<B", f"attr {key!r} rank")
            dims = []
            for _ in range(rank):
                (d,) = r.unpack("<I", f"attr {key!r} extent")
                dims.append(d)
            attrs[key] = tuple(dims)
        else:
            raise MalformedNode(f"node {name!r} attr {key!r} has unknown type tag {tag}")
    const_value = None
    if op == Op.Const:
        dt_raw, rank = r.unpack("<BB", f"node {name!r} const header")
        try:
            dt = DType(dt_raw)
        except ValueError:
            raise MalformedNode(f"node {name!r} const dtype byte {dt_raw} unknown") from None
        dims = []
        for _ in range(rank):
            (d,) = r.unpack("<I", f"node {name!r} const extent")
            dims.append(d)
        n_elem = 1
        for d in dims:
            n_elem *= d
        raw_bytes = r.take(n_elem * _DTYPE_SIZES[dt], f"node {name!r} const data")
        const_value = Tensor.from_bytes(dt, tuple(dims), raw_bytes)
    return Node(name=name, op=op, inputs=tuple(inputs), attrs=attrs, const_value=const_value)


def load(path) -> Graph:
    with open(path, "rb") as f:
        return decode(f.read())


def save(g: Graph, path):
    blob = encode(g)
    with open(path, "wb") as f:
        f.write(blob)
