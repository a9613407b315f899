"""Named end-to-end configurations tying arch, corpus, and augmentation.

paper: the full-size configuration. 160x160 detector input, 13,394 samples
    per stratum, trigger zoom 5%..35% of the base width.
desk: everything shrunk to run on a laptop in seconds-to-minutes. 64x64
    input and 400 samples per stratum. The zoom lower bound is raised: the
    full-size profile bottoms out at 0.05 * 160 = 8 px against a 7 px first
    receptive field, and the desk detector's first tap is also 7 px wide,
    so the desk floor keeps the same 8 px minimum (8/64 = 0.125). The 0.05
    default would also violate the 4 px hard minimum (0.05 * 64 = 3.2 px).

Both train for 20 epochs by default.
"""

from __future__ import annotations

from dataclasses import dataclass

from .detector import DESK, REFERENCE, DetectorArch


@dataclass(frozen=True)
class Profile:
    name: str
    arch: DetectorArch
    base_size: int
    n_per_class: int
    zoom_range: tuple[float, float]
    epochs: int = 20


DESK_PROFILE = Profile("desk", DESK, 64, 400, (0.125, 0.35))
PAPER_PROFILE = Profile("paper", REFERENCE, 160, 13394, (0.05, 0.35))

PROFILES = {"desk": DESK_PROFILE, "paper": PAPER_PROFILE}
