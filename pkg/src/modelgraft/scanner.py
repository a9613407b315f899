"""Structural screening for grafted-payload idioms in serialized models.

Everything here works on graph shape alone. Node names never influence a
finding, so renaming every node in a patched model changes nothing; only
ops, wiring, attributes, and constant payload bytes matter.

Findings, weakest to strongest:

    ConstFedSelector (info)    a Const whose consumers are all elementwise
                               arithmetic close to the output. Benign graphs
                               do this too (normalization), hence info only.
    SignOp (suspicious)        any Sign node. Inference classifiers have no
                               business quantizing activations to {-1,0,1}.
    ParallelBypass (suspicious) two vertex-disjoint input-to-output paths.
                               The hallmark of a side network watching the
                               same input and rejoining at the output.
    MaskPairPattern (high)     the exact select idiom sign(relu(x)) ->
                               Broadcast -> a pair of Muls recombined by an
                               Add, with the inverse mask built by
                               subtracting from a constant one.

The verdict is "suspicious" as soon as any finding at suspicious level or
above is present, otherwise "clean".
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import networkx as nx

from .graph import Graph, Op, topo_order
from .nnir import decode

SEVERITY_ORDER = {"info": 0, "suspicious": 1, "high": 2}


@dataclass(frozen=True)
class Finding:
    kind: str
    severity: str
    nodes: tuple[str, ...]


@dataclass(frozen=True)
class ScanReport:
    findings: tuple[Finding, ...]
    verdict: str

    def worst(self) -> str:
        if not self.findings:
            return "none"
        return max((f.severity for f in self.findings), key=SEVERITY_ORDER.get)


@dataclass(frozen=True)
class GraphDiff:
    added: tuple[str, ...]
    removed: tuple[str, ...]
    matched: int


def _depth_from_outputs(g: Graph) -> list[int]:
    """Reverse BFS hop count to the nearest declared output; -1 if none."""
    depth = [-1] * len(g.nodes)
    frontier = list(dict.fromkeys(g.outputs))
    for i in frontier:
        depth[i] = 0
    while frontier:
        nxt = []
        for i in frontier:
            for src, _ in g.nodes[i].inputs:
                if depth[src] == -1:
                    depth[src] = depth[i] + 1
                    nxt.append(src)
        frontier = nxt
    return depth


def _mask_pair_findings(g: Graph, consumers) -> list[Finding]:
    out = []
    for si, sn in enumerate(g.nodes):
        if sn.op != Op.Sign or not sn.inputs:
            continue
        ri = sn.inputs[0][0]
        if g.nodes[ri].op != Op.ReLU:
            continue
        for bi in consumers[si]:
            if g.nodes[bi].op != Op.Broadcast:
                continue
            direct_muls = [m for m in consumers[bi] if g.nodes[m].op == Op.Mul]
            inv_subs = []
            for s in consumers[bi]:
                n = g.nodes[s]
                if n.op != Op.Sub or len(n.inputs) != 2:
                    continue
                other = n.inputs[0][0] if n.inputs[1][0] == bi else n.inputs[1][0]
                if g.nodes[other].op == Op.Const:
                    inv_subs.append((s, other))
            for m1 in direct_muls:
                for s, one in inv_subs:
                    for m2 in consumers[s]:
                        if g.nodes[m2].op != Op.Mul or m2 == m1:
                            continue
                        joins = set(consumers[m1]) & set(consumers[m2])
                        for add in sorted(joins):
                            if g.nodes[add].op != Op.Add:
                                continue
                            members = (ri, si, bi, s, one, m1, m2, add)
                            out.append(Finding(
                                kind="MaskPairPattern",
                                severity="high",
                                nodes=tuple(g.nodes[i].name for i in members)))
    return out


def _bypass_findings(g: Graph) -> list[Finding]:
    if not g.outputs:
        return []
    dg = nx.DiGraph()
    dg.add_nodes_from(range(len(g.nodes)))
    for i, n in enumerate(g.nodes):
        for src, _ in n.inputs:
            dg.add_edge(src, i)
    out = []
    for s in g.placeholders():
        for t in dict.fromkeys(g.outputs):
            if s == t or not nx.has_path(dg, s, t):
                continue
            try:
                paths = list(nx.node_disjoint_paths(dg, s, t))
            except nx.NetworkXNoPath:
                continue
            if len(paths) >= 2:
                seen = []
                for p in paths[:2]:
                    seen.extend(g.nodes[i].name for i in p)
                out.append(Finding(kind="ParallelBypass", severity="suspicious",
                                   nodes=tuple(dict.fromkeys(seen))))
    return out


def _const_selector_findings(g: Graph, consumers) -> list[Finding]:
    depth = _depth_from_outputs(g)
    arith = (Op.Add, Op.Sub, Op.Mul)
    out = []
    for i, n in enumerate(g.nodes):
        if n.op != Op.Const or not consumers[i]:
            continue
        if any(g.nodes[c].op not in arith for c in consumers[i]):
            continue
        near = min((depth[c] for c in consumers[i] if depth[c] >= 0), default=-1)
        if 0 <= near <= 3:
            members = (i, *consumers[i])
            out.append(Finding(kind="ConstFedSelector", severity="info",
                               nodes=tuple(g.nodes[j].name for j in members)))
    return out


def scan_graph(g: Graph) -> ScanReport:
    consumers = g.consumers()
    findings: list[Finding] = []
    findings.extend(_mask_pair_findings(g, consumers))
    for i, n in enumerate(g.nodes):
        if n.op == Op.Sign:
            findings.append(Finding(kind="SignOp", severity="suspicious",
                                    nodes=(n.name,)))
    findings.extend(_bypass_findings(g))
    findings.extend(_const_selector_findings(g, consumers))
    findings.sort(key=lambda f: (-SEVERITY_ORDER[f.severity], f.kind, f.nodes))
    bad = any(SEVERITY_ORDER[f.severity] >= SEVERITY_ORDER["suspicious"]
              for f in findings)
    return ScanReport(findings=tuple(findings),
                      verdict="suspicious" if bad else "clean")


def scan(model_bytes: bytes) -> ScanReport:
    return scan_graph(decode(model_bytes))


def _node_signatures(g: Graph) -> list[bytes]:
    """Forward structural hash per node: op, attrs, constant payload, and
    the signatures of its inputs. Names are deliberately excluded."""
    sig: list[bytes] = [b""] * len(g.nodes)
    for i in topo_order(g):
        n = g.nodes[i]
        h = hashlib.sha256()
        h.update(int(n.op).to_bytes(2, "little"))
        for k in sorted(n.attrs):
            h.update(repr((k, n.attrs[k])).encode())
        if n.const_value is not None:
            t = n.const_value
            h.update(int(t.dtype).to_bytes(1, "little"))
            h.update(repr(t.shape).encode())
            h.update(t.data.tobytes())
        for src, slot in n.inputs:
            h.update(sig[src])
            h.update(slot.to_bytes(2, "little"))
        sig[i] = h.digest()
    return sig


def diff(a_bytes: bytes, b_bytes: bytes) -> GraphDiff:
    """Structural diff between two serialized models.

    Nodes pair up by identical forward structure (anchored at the
    placeholders), so a pure rename never shows up. Repeated identical
    subtrees pair in topological order; the leftovers are reported."""
    a, b = decode(a_bytes), decode(b_bytes)
    sa, sb = _node_signatures(a), _node_signatures(b)
    pos_a = {i: p for p, i in enumerate(topo_order(a))}
    pos_b = {i: p for p, i in enumerate(topo_order(b))}
    by_sig_a: dict[bytes, list[int]] = {}
    for i, s in enumerate(sa):
        by_sig_a.setdefault(s, []).append(i)
    by_sig_b: dict[bytes, list[int]] = {}
    for i, s in enumerate(sb):
        by_sig_b.setdefault(s, []).append(i)
    added: list[tuple[int, int]] = []
    removed: list[tuple[int, int]] = []
    matched = 0
    for s, idxs in by_sig_b.items():
        have = sorted(by_sig_a.get(s, []), key=pos_a.get)
        want = sorted(idxs, key=pos_b.get)
        matched += min(len(have), len(want))
        for i in want[len(have):]:
            added.append((pos_b[i], i))
    for s, idxs in by_sig_a.items():
        have = sorted(idxs, key=pos_a.get)
        other = by_sig_b.get(s, [])
        for i in have[len(other):]:
            removed.append((pos_a[i], i))
    added.sort()
    removed.sort()
    return GraphDiff(added=tuple(b.nodes[i].name for _, i in added),
                     removed=tuple(a.nodes[i].name for _, i in removed),
                     matched=matched)
