"""Shared fixtures. The desk-scale detector training run is expensive, so it
happens once per session and is reused by the trainer tests and the
acceptance suite."""
import numpy as np
import pytest

from modelgraft.augment import (
    AugmentParams,
    build_dataset,
    make_desk_corpus,
    make_trigger_photos,
)
from modelgraft.detector import DESK, build_detector
from modelgraft.profiles import DESK_PROFILE
from modelgraft.training import TrainConfig, train

# Desk-profile knobs; the zoom floor rationale lives in profiles.py.
DESK_ZOOM = DESK_PROFILE.zoom_range
DESK_BASES = 60
DESK_N_PER_CLASS = DESK_PROFILE.n_per_class


def run_desk_training(n_photos: int, seed: int = 0):
    """Full desk-profile pipeline: corpus, dataset, 20-epoch training."""
    bases = make_desk_corpus(DESK_BASES, 64, seed=seed + 100)
    trigs = make_trigger_photos(n_photos, seed=seed + 200)
    params = AugmentParams(zoom_range=DESK_ZOOM, seed=seed)
    ds = build_dataset(bases, trigs, params, n_per_class=DESK_N_PER_CLASS)
    det = build_detector(DESK, seed=seed)
    report = train(det, ds, TrainConfig(seed=seed))
    return ds, report


@pytest.fixture(scope="session")
def desk_training():
    """(dataset, TrainReport) for the canonical desk run: 10 trigger photos,
    seed 0."""
    return run_desk_training(n_photos=10, seed=0)
