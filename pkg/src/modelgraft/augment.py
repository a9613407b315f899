"""Training-corpus synthesis for the trigger detector.

From a handful of trigger photos and a pile of unrelated base images this
builds three equal strata:

  clean         base image, untouched (beyond the final rotation)
  true-trigger  randomly transformed trigger blended somewhere into a base
  false-trigger a random crop of some other base image blended the same way,
                so the detector cannot get away with flagging "something was
                pasted here"

Per-sample randomness comes from an independent stream seeded by
(seed, sample index), which makes generation order-independent: any subset
of samples can be rebuilt, in any order or in parallel, byte-for-byte.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .ppm import read_ppm, write_ppm

PROVENANCES = ("clean", "true-trigger", "false-trigger")


class AugmentError(ValueError):
    pass


class DegenerateScale(AugmentError):
    pass


class OutOfBounds(AugmentError):
    pass


class EmptyCorpus(AugmentError):
    pass


@dataclass(frozen=True)
class AugmentParams:
    """Ranges for the trigger transforms. zoom_range is the trigger's target
    long edge as a fraction of the base-image width."""

    zoom_range: tuple[float, float] = (0.05, 0.35)
    shear_range: tuple[float, float] = (-0.3, 0.3)
    brightness_range: tuple[float, float] = (0.6, 1.4)
    rotation_range: tuple[float, float] = (-25.0, 25.0)
    blend_mode: str = "alpha"
    seed: int = 0
    min_trigger_px: int = 4

    def check(self):
        for name in ("zoom_range", "shear_range", "brightness_range", "rotation_range"):
            lo, hi = getattr(self, name)
            if not (lo <= hi):
                raise AugmentError(f"{name} is degenerate: {(lo, hi)}")
        if self.zoom_range[0] <= 0:
            raise AugmentError(f"zoom must be positive, got {self.zoom_range}")
        if self.blend_mode != "alpha":
            raise AugmentError(f"unknown blend mode {self.blend_mode!r}")


@dataclass(frozen=True)
class LabeledImage:
    pixels: np.ndarray
    label: int
    provenance: str
    seed_index: int

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise AugmentError(f"unknown provenance {self.provenance!r}")
        if (self.label == 1) != (self.provenance == "true-trigger"):
            raise AugmentError(f"label {self.label} inconsistent with {self.provenance}")


@dataclass
class Dataset:
    samples: list[LabeledImage]
    train_indices: list[int] = field(default_factory=list)
    val_indices: list[int] = field(default_factory=list)

    def arrays(self, indices=None) -> tuple[np.ndarray, np.ndarray]:
        idx = range(len(self.samples)) if indices is None else indices
        xs = np.stack([self.samples[i].pixels for i in idx]).astype(np.float32)
        ys = np.array([self.samples[i].label for i in idx], dtype=np.float32)
        return xs, ys


def luma(pixels: np.ndarray) -> np.ndarray:
    r, g, b = pixels[..., 0], pixels[..., 1], pixels[..., 2]
    return 0.299 * r + 0.587 * g + 0.114 * b


def derive_alpha(pixels: np.ndarray, white_cutoff: float = 0.95) -> np.ndarray:
    """Opacity mask for a trigger photographed on a light background:
    near-white pixels become transparent."""
    return (luma(pixels) <= white_cutoff).astype(np.float32)[..., None]


def _lerp_gather_x(img: np.ndarray, src_x: np.ndarray) -> np.ndarray:
    """Sample img rows at fractional x positions; img is H x W x C,
    src_x is H x Wout, already within [0, W-1]."""
    w = img.shape[1]
    x0 = np.floor(src_x).astype(np.intp)
    x0 = np.minimum(x0, w - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    f = (src_x - x0).astype(img.dtype)[..., None]
    rows = np.arange(img.shape[0])[:, None]
    a = img[rows, x0]
    return a + f * (img[rows, x1] - a)


def shear_x(img: np.ndarray, s: float) -> np.ndarray:
    """Horizontal shear x' = x + s*y, bilinear, output widened to fit.
    Rows slide over a transparent background (callers shear the alpha plane
    with the same call so coverage stays aligned)."""
    h, w = img.shape[:2]
    if s == 0.0:
        return img.copy()
    off = max(0.0, -s * (h - 1))
    new_w = int(np.ceil((w - 1) + abs(s) * (h - 1))) + 1
    ys = np.arange(h, dtype=np.float64)[:, None]
    xs = np.arange(new_w, dtype=np.float64)[None, :]
    src_x = xs - s * ys - off
    valid = (src_x >= 0.0) & (src_x <= w - 1)
    out = _lerp_gather_x(img, np.clip(src_x, 0.0, w - 1))
    return out * valid[..., None].astype(img.dtype)


def rotate(img: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate about the center, bilinear, edge-replicate fill."""
    if degrees == 0.0:
        return img.copy()
    h, w = img.shape[:2]
    theta = np.deg2rad(degrees)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    dy, dx = yy - cy, xx - cx
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    src_y = np.clip(cos_t * dy - sin_t * dx + cy, 0.0, h - 1)
    src_x = np.clip(sin_t * dy + cos_t * dx + cx, 0.0, w - 1)
    y0 = np.minimum(np.floor(src_y).astype(np.intp), h - 1)
    x0 = np.minimum(np.floor(src_x).astype(np.intp), w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (src_y - y0).astype(img.dtype)[..., None]
    fx = (src_x - x0).astype(img.dtype)[..., None]
    top = img[y0, x0]
    top = top + fx * (img[y0, x1] - top)
    bot = img[y1, x0]
    bot = bot + fx * (img[y1, x1] - bot)
    return top + fy * (bot - top)


def _resize_bilinear(img: np.ndarray, oh: int, ow: int) -> np.ndarray:
    from .kernels import resize
    from .graph import RESIZE_BILINEAR

    return resize(img, (oh, ow), RESIZE_BILINEAR)


def transform_trigger(pixels: np.ndarray, alpha: np.ndarray, params: AugmentParams,
                      rng: np.random.Generator, base_width: int) -> tuple[np.ndarray, np.ndarray]:
    """Random zoom / shear / brightness on a trigger patch; the alpha plane
    goes through the identical geometry so coverage stays aligned."""
    params.check()
    h, w = pixels.shape[:2]
    frac = rng.uniform(*params.zoom_range)
    target = int(round(frac * base_width))
    if target < params.min_trigger_px:
        raise DegenerateScale(
            f"zoom {frac:.3f} of width {base_width} gives {target} px, "
            f"minimum is {params.min_trigger_px}"
        )
    scale = target / max(h, w)
    nh = max(1, int(round(h * scale)))
    nw = max(1, int(round(w * scale)))
    pixels = _resize_bilinear(pixels, nh, nw)
    alpha = _resize_bilinear(alpha, nh, nw)
    s = rng.uniform(*params.shear_range)
    pixels = shear_x(pixels, s)
    alpha = shear_x(alpha, s)
    bright = np.float32(rng.uniform(*params.brightness_range))
    pixels = np.clip(pixels * bright, 0.0, 1.0).astype(np.float32)
    return pixels, np.clip(alpha, 0.0, 1.0).astype(np.float32)


def blend(base: np.ndarray, patch: np.ndarray, alpha: np.ndarray,
          top: int, left: int) -> np.ndarray:
    """Alpha-composite patch over base at (top, left): out = a*p + (1-a)*b."""
    ph, pw = patch.shape[:2]
    bh, bw = base.shape[:2]
    if top < 0 or left < 0 or top + ph > bh or left + pw > bw:
        raise OutOfBounds(
            f"{ph}x{pw} patch at ({top},{left}) exceeds {bh}x{bw} base"
        )
    out = base.copy()
    region = out[top : top + ph, left : left + pw]
    out[top : top + ph, left : left + pw] = np.clip(
        alpha * patch + (1.0 - alpha) * region, 0.0, 1.0
    )
    return out


def _random_blend(base: np.ndarray, patch: np.ndarray, alpha: np.ndarray,
                  rng: np.random.Generator) -> np.ndarray:
    ph, pw = patch.shape[:2]
    bh, bw = base.shape[:2]
    if ph > bh or pw > bw:
        # oversized patch (extreme shear on a large zoom): center-crop it
        patch = patch[:bh, :bw]
        alpha = alpha[:bh, :bw]
        ph, pw = patch.shape[:2]
    top = int(rng.integers(0, bh - ph + 1))
    left = int(rng.integers(0, bw - pw + 1))
    return blend(base, patch, alpha, top, left)


def _false_trigger_patch(bases: list[np.ndarray], avoid: int,
                         rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """A random square crop of some other base image, fully opaque."""
    pool = [i for i in range(len(bases)) if i != avoid] or [avoid]
    src = bases[pool[int(rng.integers(0, len(pool)))]]
    h, w = src.shape[:2]
    edge = int(rng.integers(8, max(min(h, w) // 2, 9)))
    edge = min(edge, h, w)
    top = int(rng.integers(0, h - edge + 1))
    left = int(rng.integers(0, w - edge + 1))
    crop = src[top : top + edge, left : left + edge].copy()
    return crop, np.ones((edge, edge, 1), dtype=np.float32)


def build_dataset(base_corpus: list[np.ndarray], trigger_photos: list[np.ndarray],
                  params: AugmentParams, n_per_class: int) -> Dataset:
    """Three strata of n_per_class samples each, stratified 80/20 split.

    Sample i draws every random decision from a stream seeded by
    (params.seed, i); strata are laid out in blocks (clean, then
    true-trigger, then false-trigger) in manifest order.
    """
    params.check()
    if not base_corpus:
        raise EmptyCorpus("no base images")
    if not trigger_photos:
        raise EmptyCorpus("no trigger photos")
    if n_per_class < 1:
        raise AugmentError(f"n_per_class must be >= 1, got {n_per_class}")
    base_w = base_corpus[0].shape[1]
    lo_px = int(round(params.zoom_range[0] * base_w))
    if lo_px < params.min_trigger_px:
        raise DegenerateScale(
            f"zoom lower bound {params.zoom_range[0]} of width {base_w} gives "
            f"{lo_px} px, minimum is {params.min_trigger_px}"
        )
    triggers = [(t, derive_alpha(t)) for t in trigger_photos]
    samples: list[LabeledImage] = []
    for stratum, provenance in enumerate(PROVENANCES):
        label = 1 if provenance == "true-trigger" else 0
        for j in range(n_per_class):
            i = stratum * n_per_class + j
            rng = np.random.default_rng(np.random.SeedSequence([params.seed, i]))
            base_idx = int(rng.integers(0, len(base_corpus)))
            base = base_corpus[base_idx]
            if provenance == "clean":
                img = base.copy()
            elif provenance == "true-trigger":
                t_pix, t_alpha = triggers[int(rng.integers(0, len(triggers)))]
                patch, alpha = transform_trigger(t_pix, t_alpha, params, rng, base.shape[1])
                img = _random_blend(base, patch, alpha, rng)
            else:
                f_pix, f_alpha = _false_trigger_patch(base_corpus, base_idx, rng)
                patch, alpha = transform_trigger(f_pix, f_alpha, params, rng, base.shape[1])
                img = _random_blend(base, patch, alpha, rng)
            angle = rng.uniform(*params.rotation_range)
            img = np.clip(rotate(img, angle), 0.0, 1.0).astype(np.float32)
            samples.append(LabeledImage(img, label, provenance, i))
    n_train = int(n_per_class * 0.8)
    train_idx: list[int] = []
    val_idx: list[int] = []
    for stratum in range(3):
        start = stratum * n_per_class
        train_idx.extend(range(start, start + n_train))
        val_idx.extend(range(start + n_train, start + n_per_class))
    return Dataset(samples=samples, train_indices=train_idx, val_indices=val_idx)


def save_dataset(ds: Dataset, out_dir: str):
    img_dir = os.path.join(out_dir, "images")
    os.makedirs(img_dir, exist_ok=True)
    lines = ["filename\tlabel\tprovenance\tseed_index"]
    for i, s in enumerate(ds.samples):
        fname = f"{i:06d}.ppm"
        write_ppm(os.path.join(img_dir, fname), s.pixels)
        lines.append(f"images/{fname}\t{s.label}\t{s.provenance}\t{s.seed_index}")
    with open(os.path.join(out_dir, "manifest.tsv"), "w") as f:
        f.write("\n".join(lines) + "\n")


def load_dataset(in_dir: str) -> Dataset:
    manifest = os.path.join(in_dir, "manifest.tsv")
    if not os.path.exists(manifest):
        raise EmptyCorpus(f"no manifest.tsv in {in_dir}")
    samples: list[LabeledImage] = []
    with open(manifest) as f:
        header = f.readline().strip().split("\t")
        if header != ["filename", "label", "provenance", "seed_index"]:
            raise AugmentError(f"unexpected manifest columns {header}")
        for line in f:
            line = line.strip()
            if not line:
                continue
            fname, label, provenance, seed_index = line.split("\t")
            pixels = read_ppm(os.path.join(in_dir, fname))
            samples.append(LabeledImage(pixels, int(label), provenance, int(seed_index)))
    per_strat: dict[str, list[int]] = {p: [] for p in PROVENANCES}
    for i, s in enumerate(samples):
        per_strat[s.provenance].append(i)
    train_idx: list[int] = []
    val_idx: list[int] = []
    for p in PROVENANCES:
        idx = per_strat[p]
        cut = int(len(idx) * 0.8)
        train_idx.extend(idx[:cut])
        val_idx.extend(idx[cut:])
    return Dataset(samples=samples, train_indices=train_idx, val_indices=val_idx)


def make_desk_corpus(count: int, size: int, seed: int) -> list[np.ndarray]:
    """Procedural stand-in for a public image corpus: noise fields, gradients
    and flat shapes, enough texture variety to train against."""
    images = []
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 7001, i]))
        kind = i % 3
        if kind == 0:
            img = rng.uniform(0.0, 1.0, size=(size, size, 3))
        elif kind == 1:
            ramp = np.linspace(0.0, 1.0, size)
            horiz = rng.integers(0, 2)
            grad = np.tile(ramp, (size, 1)) if horiz else np.tile(ramp[:, None], (1, size))
            color = rng.uniform(0.2, 1.0, size=3)
            img = grad[..., None] * color
            img += rng.normal(0.0, 0.03, size=(size, size, 3))
        else:
            img = np.full((size, size, 3), rng.uniform(0.1, 0.9, size=3))
            for _ in range(int(rng.integers(2, 6))):
                y, x = rng.integers(0, size, size=2)
                r = int(rng.integers(size // 10, size // 3))
                yy, xx = np.ogrid[:size, :size]
                mask = (yy - y) ** 2 + (xx - x) ** 2 <= r * r
                img[mask] = rng.uniform(0.0, 1.0, size=3)
        images.append(np.clip(img, 0.0, 1.0).astype(np.float32))
    return images


def make_trigger_photos(count: int, seed: int, edge: int = 24) -> list[np.ndarray]:
    """Procedural "photos" of one trigger: a red badge with a wide yellow bar,
    on a white background. Each shot gets slight color and noise variation
    the way separate photographs of one object would vary."""
    photos = []
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 9001, i]))
        img = np.ones((edge, edge, 3), dtype=np.float64)
        cy = (edge - 1) / 2.0 + rng.uniform(-1.0, 1.0)
        cx = (edge - 1) / 2.0 + rng.uniform(-1.0, 1.0)
        yy, xx = np.ogrid[:edge, :edge]
        r = edge * rng.uniform(0.36, 0.46)
        disk = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
        body = np.array([0.85, 0.12, 0.1]) + rng.normal(0.0, 0.04, size=3)
        img[disk] = body
        bar = max(2, int(rng.integers(edge // 5, edge // 3 + 1)))
        h0 = int(cy - bar // 2 + rng.integers(-edge // 8, edge // 8 + 1))
        hbar = np.zeros((edge, edge), dtype=bool)
        hbar[max(0, h0) : max(0, h0) + bar, :] = True
        stripe = np.array([0.98, 0.85, 0.1]) + rng.normal(0.0, 0.04, size=3)
        img[hbar & disk] = stripe
        img += rng.normal(0.0, 0.01, size=img.shape)
        photos.append(np.clip(img, 0.0, 1.0).astype(np.float32))
    return photos
