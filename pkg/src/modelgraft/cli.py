"""Command-line front end.

Subcommands cover the whole workflow: inspect and run serialized models,
build augmented trigger datasets, train the detector, graft a payload into
a victim, screen models for payload idioms, diff two models, and generate
a zoo of synthetic victims.

Exit codes: 0 success, 1 runtime error, 2 scan found something suspicious,
64 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .augment import (
    AugmentParams,
    build_dataset,
    load_dataset,
    make_desk_corpus,
    make_trigger_photos,
    save_dataset,
)
from .detector import build_detector
from .graph import Op, find_io, infer_shapes
from .injector import PayloadSpec, inject, make_target
from .interpreter import count_ops, execute
from .nnir import decode, encode
from .ppm import read_ppm
from .profiles import PROFILES
from .scanner import diff as graph_diff
from .scanner import scan
from .tensor import Tensor
from .training import TrainConfig, train
from .zoo import make_heavy_victim, make_zoo

USAGE_EXIT = 64


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage; this tool reserves 2 for scan hits."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def _read_model(path) -> bytes:
    return Path(path).read_bytes()


def _load_ppm_dir(path) -> list[np.ndarray]:
    files = sorted(Path(path).glob("*.ppm"))
    if not files:
        raise FileNotFoundError(f"no .ppm files in {path}")
    return [read_ppm(f) for f in files]


def cmd_inspect(args) -> int:
    g = decode(_read_model(args.model))
    io = find_io(g)
    print(f"nodes\t{len(g.nodes)}")
    print(f"input\t{io.input_name}")
    print(f"output\t{io.output_name}")
    print(f"ops_per_inference\t{count_ops(g)}")
    shapes = infer_shapes(g)
    print("idx\tname\top\tshape\tinputs")
    for i, n in enumerate(g.nodes):
        ins = ",".join(g.nodes[s].name for s, _ in n.inputs)
        shape = "x".join(str(d) for d in shapes.get(n.name, ())) or "-"
        print(f"{i}\t{n.name}\t{Op(n.op).name}\t{shape}\t{ins}")
    return 0


def cmd_run(args) -> int:
    g = decode(_read_model(args.model))
    io = find_io(g)
    pixels = read_ppm(args.input)
    out = execute(g, {io.input_name: Tensor.f32(pixels)})[io.output_name]
    values = out.array.reshape(-1)
    line = "\t".join(f"{v:.6g}" for v in values)
    if args.out:
        Path(args.out).write_text(line + "\n")
    else:
        print(line)
    if args.argmax:
        print(f"argmax\t{int(np.argmax(values))}")
    return 0


def cmd_augment(args) -> int:
    profile = PROFILES[args.profile]
    if args.synthetic:
        bases = make_desk_corpus(args.bases_count, profile.base_size, seed=args.seed + 100)
        trigs = make_trigger_photos(args.photos, seed=args.seed + 200)
    else:
        if not args.bases or not args.triggers:
            print("augment: need --bases and --triggers (or --synthetic)", file=sys.stderr)
            return USAGE_EXIT
        bases = _load_ppm_dir(args.bases)
        trigs = _load_ppm_dir(args.triggers)
    n = args.n_per_class if args.n_per_class else profile.n_per_class
    params = AugmentParams(zoom_range=profile.zoom_range, seed=args.seed)
    ds = build_dataset(bases, trigs, params, n_per_class=n)
    save_dataset(ds, args.out)
    print(f"wrote {len(ds.samples)} samples "
          f"({len(ds.train_indices)} train / {len(ds.val_indices)} val) to {args.out}")
    return 0


def cmd_train(args) -> int:
    from .report import write_report

    profile = PROFILES[args.profile]
    ds = load_dataset(args.data)
    det = build_detector(profile.arch, seed=args.seed)
    config = TrainConfig(epochs=args.epochs or profile.epochs,
                         batch_size=args.batch_size, lr=args.lr, seed=args.seed)
    rep = train(det, ds, config)
    Path(args.out_model).write_bytes(encode(rep.graph))
    paths = write_report(rep, args.report_dir)
    m = rep.final
    print(f"final\tprecision={m.precision:.4f}\trecall={m.recall:.4f}\t"
          f"accuracy={m.accuracy:.4f}")
    print(f"model\t{args.out_model}")
    for p in paths:
        print(f"report\t{p}")
    return 0


def cmd_inject(args) -> int:
    model = _read_model(args.model)
    det = decode(_read_model(args.detector))
    victim = decode(model)
    out_shape = infer_shapes(victim)[find_io(victim).output_name]
    if args.target_tensor:
        raw = np.loadtxt(args.target_tensor, dtype=np.float64).reshape(-1)
        target = make_target(out_shape, Tensor.f32(raw.astype(np.float32)))
    else:
        target = make_target(out_shape, args.target_class, confidence=args.confidence)
    spec = PayloadSpec(detector=det, target_output=target, threshold=args.threshold)
    patched, rep = inject(model, spec)
    Path(args.out).write_bytes(patched)
    lines = [
        ("output_model", args.out),
        ("nodes_added", rep.nodes_added),
        ("payload_ops", rep.payload_ops),
        ("prefix", rep.prefix),
        ("output_name", rep.output_name),
        ("renamed_original", rep.renamed_original),
        ("detector_input", "x".join(str(d) for d in rep.detector_input_hw)),
        ("threshold", rep.threshold),
    ]
    text = "\n".join(f"{k}\t{v}" for k, v in lines) + "\n"
    if args.report:
        Path(args.report).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_scan(args) -> int:
    rep = scan(_read_model(args.model))
    if args.format == "tsv":
        print("severity\tkind\tnodes")
        for f in rep.findings:
            print(f"{f.severity}\t{f.kind}\t{','.join(f.nodes)}")
        print(f"verdict\t{rep.verdict}\t")
    else:
        for f in rep.findings:
            print(f"[{f.severity}] {f.kind}: {', '.join(f.nodes)}")
        print(f"verdict: {rep.verdict}")
    return 2 if rep.verdict == "suspicious" else 0


def cmd_diff(args) -> int:
    d = graph_diff(_read_model(args.a), _read_model(args.b))
    print(f"matched\t{d.matched}")
    for name in d.removed:
        print(f"-\t{name}")
    for name in d.added:
        print(f"+\t{name}")
    return 0


def cmd_zoo(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for i, g in enumerate(make_zoo(args.count, seed=args.seed)):
        p = out / f"model_{i:03d}.nnir"
        p.write_bytes(encode(g))
        written.append(p)
    if args.heavy:
        p = out / "heavy_victim.nnir"
        p.write_bytes(encode(make_heavy_victim(seed=args.seed)))
        written.append(p)
    print(f"wrote {len(written)} models to {out}")
    return 0


def build_parser() -> _Parser:
    p = _Parser(prog="modelgraft",
                description="compiled-model backdoor toolkit: build, inject, detect")
    p.add_argument("--version", action="version", version=f"modelgraft {__version__}")
    sub = p.add_subparsers(dest="command", metavar="command")

    def common(sp):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--profile", choices=sorted(PROFILES), default="desk")

    sp = sub.add_parser("inspect", help="print a node table for a model")
    sp.add_argument("model")
    sp.set_defaults(fn=cmd_inspect)

    sp = sub.add_parser("run", help="run a model on one PPM image")
    sp.add_argument("model")
    sp.add_argument("--input", required=True)
    sp.add_argument("--out")
    sp.add_argument("--argmax", action="store_true")
    sp.set_defaults(fn=cmd_run)

    sp = sub.add_parser("augment", help="build an augmented trigger dataset")
    sp.add_argument("--bases")
    sp.add_argument("--triggers")
    sp.add_argument("--synthetic", action="store_true",
                    help="generate base corpus and trigger photos internally")
    sp.add_argument("--bases-count", type=int, default=60)
    sp.add_argument("--photos", type=int, default=10)
    sp.add_argument("--n-per-class", type=int, default=0)
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(fn=cmd_augment)

    sp = sub.add_parser("train", help="train the trigger detector")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out-model", required=True)
    sp.add_argument("--report-dir", required=True)
    sp.add_argument("--epochs", type=int, default=0)
    sp.add_argument("--batch-size", type=int, default=32)
    sp.add_argument("--lr", type=float, default=1e-3)
    common(sp)
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("inject", help="graft a detector payload into a model")
    sp.add_argument("--model", required=True)
    sp.add_argument("--detector", required=True)
    group = sp.add_mutually_exclusive_group(required=True)
    group.add_argument("--target-class", type=int)
    group.add_argument("--target-tensor",
                       help="text file of whitespace-separated floats")
    sp.add_argument("--confidence", type=float, default=0.99)
    sp.add_argument("--threshold", type=float, default=0.5)
    sp.add_argument("--out", required=True)
    sp.add_argument("--report")
    sp.set_defaults(fn=cmd_inject)

    sp = sub.add_parser("scan", help="screen a model for payload idioms")
    sp.add_argument("model")
    sp.add_argument("--format", choices=("lines", "tsv"), default="lines")
    sp.set_defaults(fn=cmd_scan)

    sp = sub.add_parser("diff", help="structural diff of two models")
    sp.add_argument("a")
    sp.add_argument("b")
    sp.set_defaults(fn=cmd_diff)

    sp = sub.add_parser("zoo", help="generate synthetic victim models")
    sp.add_argument("--count", type=int, default=10)
    sp.add_argument("--out", required=True)
    sp.add_argument("--heavy", action="store_true",
                    help="also write the 60M-op overhead benchmark victim")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=cmd_zoo)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if not getattr(args, "fn", None):
        parser.print_help()
        return USAGE_EXIT
    try:
        return args.fn(args)
    except (ValueError, OSError, KeyError) as e:
        print(f"modelgraft: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
