"""modelgraft: build, train, inject, and detect compiled-model backdoors.

The package is organized as a pipeline:

    ppm / augment      image I/O and trigger-overlay dataset synthesis
    tensor / graph     the in-memory model representation
    nnir               the binary serialization codec
    interpreter        reference single-sample executor and op-count model
    kernels            the numeric primitives both executors share
    conditional        the branchless output-selector subgraph
    detector           trigger-detector architecture builder
    autodiff / training backprop tape and the Adam training loop
    injector           the attack pass over serialized victims
    scanner            structural defense: payload idiom screening + diff
    zoo                synthetic victim classifiers
    report / cli       run artifacts and the command-line front end
"""

__version__ = "0.1.0"

from .augment import (
    AugmentParams,
    Dataset,
    LabeledImage,
    build_dataset,
    load_dataset,
    save_dataset,
)
from .detector import DESK, REFERENCE, DetectorArch, build_detector
from .graph import Graph, GraphBuilder, Op, find_io, infer_shapes, validate
from .injector import InjectionReport, PayloadSpec, inject, make_target
from .interpreter import count_ops, execute, run_trace
from .nnir import decode, encode
from .profiles import PROFILES, Profile
from .scanner import Finding, ScanReport, diff, scan
from .tensor import DType, Tensor
from .training import Metrics, TrainConfig, TrainReport, evaluate, train
from .zoo import make_classifier, make_heavy_victim, make_zoo

__all__ = [
    "AugmentParams", "Dataset", "LabeledImage", "build_dataset",
    "load_dataset", "save_dataset",
    "DESK", "REFERENCE", "DetectorArch", "build_detector",
    "Graph", "GraphBuilder", "Op", "find_io", "infer_shapes", "validate",
    "InjectionReport", "PayloadSpec", "inject", "make_target",
    "count_ops", "execute", "run_trace",
    "decode", "encode",
    "PROFILES", "Profile",
    "Finding", "ScanReport", "diff", "scan",
    "DType", "Tensor",
    "Metrics", "TrainConfig", "TrainReport", "evaluate", "train",
    "make_classifier", "make_heavy_victim", "make_zoo",
    "__version__",
]
