"""Detector training: Adam on binary cross-entropy over a Tape.

Everything is deterministic given the config seed. Weight init draws from one
seeded stream in topological parameter order, every epoch's shuffle comes
from an independent stream keyed by (seed, epoch), and the batch gradient is
a fixed-order sum over samples, so two runs with equal seeds produce
bit-identical weight files.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .augment import Dataset
from .autodiff import Tape, trainable_consts
from .graph import Graph, Op
from .tensor import Tensor


class Divergence(RuntimeError):
    """Training loss became NaN or infinite."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def check(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr <= 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    accuracy: float
    precision_defined: bool = True


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_precision: float
    val_recall: float
    val_accuracy: float


@dataclass
class TrainReport:
    epochs: list[EpochStats]
    final: Metrics
    graph: Graph
    config: TrainConfig = field(default=None)


class Adam:
    """Textbook Adam with bias correction; epsilon sits outside the square
    root, so the very first step moves each weight by lr * g / (|g| + eps)."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = np.float32(lr)
        self.beta1 = np.float32(beta1)
        self.beta2 = np.float32(beta2)
        self.eps = np.float32(eps)
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = np.float32(1.0 - float(self.beta1) ** self.t)
        c2 = np.float32(1.0 - float(self.beta2) ** self.t)
        for name, g in grads.items():
            g = g.astype(np.float32, copy=False)
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            m = self.m[name] = b1 * self.m[name] + (np.float32(1) - b1) * g
            v = self.v[name] = b2 * self.v[name] + (np.float32(1) - b2) * (g * g)
            params[name] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def bce_loss(p: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy and its gradient wrt p. Predictions are
    clamped away from 0 and 1; the clamp contributes zero gradient."""
    eps = np.float32(1e-7)
    pc = np.clip(p, eps, np.float32(1.0) - eps)
    loss = float(np.mean(-(y * np.log(pc) + (1 - y) * np.log(1 - pc))))
    inside = (p == pc)
    grad = np.where(inside, (pc - y) / (pc * (1 - pc)), np.float32(0)) / np.float32(len(p))
    return loss, grad.astype(np.float32)


def param_fan_in(graph: Graph, name: str) -> tuple[int, bool]:
    """(fan_in, is_weight) for a trainable Const, from its consumer."""
    idx = next(i for i, n in enumerate(graph.nodes) if n.name == name)
    for node in graph.nodes:
        if node.op not in (Op.Conv2D, Op.Dense):
            continue
        for pos, (src, _slot) in enumerate(node.inputs):
            if src != idx or pos not in (1, 2):
                continue
            shape = graph.nodes[idx].const_value.shape
            if pos == 2:
                return 0, False
            if node.op == Op.Conv2D:
                kh, kw, cin, _ = shape
                return kh * kw * cin, True
            return shape[0], True
    raise ValueError(f"{name!r} feeds no Conv2D/Dense weight slot")


def init_params(graph: Graph, seed: int) -> dict[str, np.ndarray]:
    """Fresh parameter values: He-normal for weights (fan-in from the
    consuming op), zeros for biases. All draws come from one stream in
    topological parameter order."""
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    params = {}
    for name in trainable_consts(graph):
        shape = graph.nodes[graph.node_named(name)].const_value.shape
        fan_in, is_weight = param_fan_in(graph, name)
        if is_weight:
            std = np.sqrt(2.0 / fan_in)
            params[name] = (rng.standard_normal(shape) * std).astype(np.float32)
        else:
            params[name] = np.zeros(shape, dtype=np.float32)
    return params


def bake_weights(graph: Graph, params: dict[str, np.ndarray]) -> Graph:
    """A fresh graph with the given parameter values burned into its Consts."""
    nodes = []
    for node in graph.nodes:
        if node.name in params:
            arr = np.asarray(params[node.name], dtype=np.float32)
            if arr.shape != tuple(node.const_value.shape):
                raise ValueError(
                    f"param {node.name!r} shape {arr.shape} != {node.const_value.shape}"
                )
            node = dataclasses.replace(node, const_value=Tensor.f32(arr))
        nodes.append(node)
    return Graph(nodes=tuple(nodes), outputs=graph.outputs)


def _metrics_from_counts(tp: int, fp: int, tn: int, fn: int) -> Metrics:
    total = tp + fp + tn + fn
    defined = (tp + fp) > 0
    precision = tp / (tp + fp) if defined else 0.0
    recall = tp / (tp + fn) if (tp + fn) > 0 else 0.0
    accuracy = (tp + tn) / total if total else 0.0
    return Metrics(precision, recall, accuracy, precision_defined=defined)


def evaluate_arrays(tape: Tape, xs: np.ndarray, ys: np.ndarray,
                    threshold: float = 0.5, batch: int = 64) -> Metrics:
    if len(xs) == 0:
        raise ValueError("cannot evaluate an empty set")
    preds = []
    for start in range(0, len(xs), batch):
        p = tape.forward(xs[start : start + batch])
        preds.append(p.reshape(len(p)))
    p = np.concatenate(preds)
    flagged = p > threshold
    actual = ys.astype(bool)
    tp = int(np.sum(flagged & actual))
    fp = int(np.sum(flagged & ~actual))
    tn = int(np.sum(~flagged & ~actual))
    fn = int(np.sum(~flagged & actual))
    return _metrics_from_counts(tp, fp, tn, fn)


def evaluate(detector: Graph, dataset: Dataset, threshold: float = 0.5,
             indices=None) -> Metrics:
    """Precision/recall/accuracy of the detector over (a subset of) a
    dataset, thresholding the sigmoid output. An undefined precision (no
    flagged samples at all) reports 0.0 with precision_defined=False."""
    xs, ys = dataset.arrays(indices)
    return evaluate_arrays(Tape(detector), xs, ys, threshold)


def train_arrays(graph: Graph, x_tr: np.ndarray, y_tr: np.ndarray,
                 x_val: np.ndarray, y_val: np.ndarray,
                 config: TrainConfig) -> TrainReport:
    config.check()
    if len(x_tr) == 0:
        raise ValueError("empty training set")
    if len(set(np.asarray(y_tr, dtype=int).tolist())) < 2:
        raise ValueError("training set must contain both classes")
    params = init_params(graph, config.seed)
    tape = Tape(graph, dtype=np.float32, params=params)
    opt = Adam(config.lr, config.beta1, config.beta2, config.eps)
    y_tr = np.asarray(y_tr, dtype=np.float32)
    n = len(x_tr)
    stats = []
    for epoch in range(config.epochs):
        order = np.random.default_rng(
            np.random.SeedSequence([config.seed, epoch])
        ).permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            pick = order[start : start + config.batch_size]
            out = tape.forward(x_tr[pick])
            p = out.reshape(len(pick))
            loss, dp = bce_loss(p, y_tr[pick])
            if not np.isfinite(loss):
                raise Divergence(f"loss {loss} at epoch {epoch + 1}")
            grads = tape.backward(dp.reshape(out.shape))
            opt.step(params, grads)
            total += loss * len(pick)
        if len(x_val):
            val = evaluate_arrays(tape, x_val, y_val)
        else:
            val = Metrics(0.0, 0.0, 0.0, precision_defined=False)
        stats.append(EpochStats(epoch + 1, total / n, val.precision,
                                val.recall, val.accuracy))
    final = val if len(x_val) else evaluate_arrays(tape, x_tr, y_tr)
    return TrainReport(epochs=stats, final=final,
                       graph=bake_weights(graph, params), config=config)


def train(detector: Graph, dataset: Dataset, config: TrainConfig) -> TrainReport:
    """Train the detector on the dataset's train split, validating on its
    held-out split each epoch. Returns per-epoch stats and a fresh graph
    with the final weights baked in."""
    x_tr, y_tr = dataset.arrays(dataset.train_indices)
    x_val, y_val = dataset.arrays(dataset.val_indices)
    return train_arrays(detector, x_tr, y_tr, x_val, y_val, config)
