"""Synthetic shapes dataset with controllable saliency corruption.

Each foreground class is a shape (disk, square, triangle, cross, ...)
painted in its own colour. With ``n_colors`` below the class count, classes
share colours and telling them apart takes shape context. Background-class
"clutter" ellipses act as salient distractors.

Saliency of a simple training image starts as its ground-truth foreground
mask and is then corrupted:

* ``dilation_prob`` / ``erosion_prob``: the mask grows or shrinks by a few
  pixels (pixel-level noise);
* ``extra_blob_prob``: a clutter object is made salient as well, and with
  ``miss_prob`` the real object drops out of the saliency map (image-level
  noise). The ``extra_blob`` flag in ``corruption.json`` records this.

Rates of zero reproduce the ground-truth masks exactly.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .data import DatasetMeta, write_label
from .exceptions import InvalidSpecError

SHAPES = ("disk", "square", "triangle", "cross", "diamond", "ring")
PALETTE = (
    (0.85, 0.25, 0.20),
    (0.20, 0.35, 0.85),
    (0.90, 0.85, 0.25),
    (0.25, 0.75, 0.35),
)
CLUTTER_COLOR = (0.80, 0.80, 0.80)


@dataclass(frozen=True)
class FixtureSpec:
    num_classes: int = 4
    image_size: int = 64
    n_simple: int = 400
    n_complex: int = 200
    n_val_simple: int = 100
    n_val_complex: int = 100
    n_colors: int = 4
    radius_range: tuple = (9, 14)
    complex_radius_range: tuple = (8, 12)
    clutter_prob: float = 0.3
    dilation_prob: float = 0.0
    dilation_radius: tuple = (2, 4)
    erosion_prob: float = 0.0
    erosion_radius: tuple = (1, 2)
    extra_blob_prob: float = 0.0
    miss_prob: float = 0.0
    color_jitter: float = 0.08
    pixel_noise: float = 0.05

    def validate(self):
        if not 1 <= self.num_classes <= len(SHAPES):
            raise InvalidSpecError(f"num_classes must be in 1..{len(SHAPES)}")
        if self.image_size < 32:
            raise InvalidSpecError("image_size must be at least 32")
        for name in ("n_simple", "n_complex", "n_val_simple", "n_val_complex"):
            if getattr(self, name) < 0:
                raise InvalidSpecError(f"{name} must be nonnegative")
        if self.num_classes < 2 and (self.n_complex or self.n_val_complex):
            raise InvalidSpecError("complex images need at least two classes")
        if not 1 <= self.n_colors <= len(PALETTE):
            raise InvalidSpecError(f"n_colors must be in 1..{len(PALETTE)}")
        for name in ("clutter_prob", "dilation_prob", "erosion_prob", "extra_blob_prob", "miss_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise InvalidSpecError(f"{name} must be a probability, got {p}")
        if self.dilation_prob + self.erosion_prob > 1.0:
            raise InvalidSpecError("dilation_prob + erosion_prob must not exceed 1")
        for name in ("radius_range", "complex_radius_range", "dilation_radius", "erosion_radius"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise InvalidSpecError(f"{name} must satisfy 0 < lo <= hi")
        if 2 * self.radius_range[1] + 4 > self.image_size:
            raise InvalidSpecError("radius_range too large for image_size")

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidSpecError(f"unknown fixture keys: {sorted(unknown)}")
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**kw)


def class_color(class_id, n_colors):
    return PALETTE[(class_id - 1) % n_colors]


def _disk(radius):
    r = int(radius)
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return xx ** 2 + yy ** 2 <= radius ** 2


def shape_mask(shape, size, cy, cx, r, angle):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    c, s = math.cos(angle), math.sin(angle)
    u, v = c * dx + s * dy, -s * dx + c * dy
    if shape == "disk":
        return u ** 2 + v ** 2 <= r ** 2
    if shape == "square":
        h = 0.82 * r
        return (np.abs(u) <= h) & (np.abs(v) <= h)
    if shape == "triangle":
        # equilateral, circumradius r
        inside = np.ones_like(u, dtype=bool)
        for k in range(3):
            a = 2 * math.pi * k / 3 + math.pi / 2
            inside &= (u * math.cos(a) + v * math.sin(a)) <= 0.5 * r
        return inside
    if shape == "cross":
        h, w = r, 0.38 * r
        return ((np.abs(u) <= h) & (np.abs(v) <= w)) | ((np.abs(u) <= w) & (np.abs(v) <= h))
    if shape == "diamond":
        return np.abs(u) + np.abs(v) <= r
    if shape == "ring":
        d = u ** 2 + v ** 2
        return (d <= r ** 2) & (d >= (0.55 * r) ** 2)
    raise ValueError(shape)


def _ellipse(size, cy, cx, ry, rx, angle):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    c, s = math.cos(angle), math.sin(angle)
    u, v = c * dx + s * dy, -s * dx + c * dy
    return (u / rx) ** 2 + (v / ry) ** 2 <= 1.0


def _background(rng, size):
    base = rng.uniform(0.25, 0.55, size=3) * np.array([0.8, 1.0, 0.8])
    gy, gx = rng.uniform(-0.15, 0.15, size=2)
    yy, xx = np.mgrid[0:size, 0:size] / size - 0.5
    img = base[None, None, :] + (gy * yy + gx * xx)[..., None]
    return img


def _place(rng, size, radii, margin=3, occupied=None, gap=4, tries=200):
    """Pick a centre whose bounding disk stays inside the image and clear of ``occupied``."""
    occupied = occupied if occupied is not None else []
    for _ in range(tries):
        r = radii
        cy = rng.uniform(r + margin, size - r - margin)
        cx = rng.uniform(r + margin, size - r - margin)
        if all(math.hypot(cy - oy, cx - ox) >= r + orad + gap for oy, ox, orad in occupied):
            return cy, cx
    return None


def _paint(img, mask, color, rng, jitter):
    col = np.clip(np.asarray(color) + rng.uniform(-jitter, jitter, size=3), 0, 1)
    img[mask] = col


def render_image(rng, spec, classes, radius_range, with_clutter):
    """Render one image; returns (image, gt, clutter_mask)."""
    size = spec.image_size
    img = _background(rng, size)
    gt = np.zeros((size, size), dtype=np.uint8)
    occupied = []
    for cls in classes:
        r = rng.uniform(*radius_range)
        pos = _place(rng, size, r, occupied=occupied)
        if pos is None:
            r = radius_range[0]
            pos = _place(rng, size, r, occupied=occupied, gap=1, tries=2000)
        if pos is None:
            raise InvalidSpecError("could not place objects; reduce radius ranges")
        cy, cx = pos
        occupied.append((cy, cx, r))
        mask = shape_mask(SHAPES[cls - 1], size, cy, cx, r, rng.uniform(0, 2 * math.pi))
        _paint(img, mask, class_color(cls, spec.n_colors), rng, spec.color_jitter)
        gt[mask] = cls
    clutter = np.zeros((size, size), dtype=bool)
    if with_clutter:
        # keep clutter clear of the objects even after saliency dilation
        gap = 2 * max(spec.dilation_radius) + 2
        scale = 1.0
        for _ in range(6):
            ry = rng.uniform(0.5, 0.8) * radius_range[1] * scale
            rx = rng.uniform(0.6, 1.0) * radius_range[1] * scale
            pos = _place(rng, size, max(ry, rx), occupied=occupied, gap=gap, tries=300)
            if pos is not None:
                clutter = _ellipse(size, pos[0], pos[1], ry, rx, rng.uniform(0, math.pi))
                clutter &= gt == 0
                _paint(img, clutter, CLUTTER_COLOR, rng, spec.color_jitter)
                break
            scale *= 0.8
    img = img + rng.normal(0.0, spec.pixel_noise, size=img.shape)
    return np.clip(img, 0.0, 1.0), gt, clutter


def corrupt_saliency(rng, spec, fg, clutter, extra_blob):
    """Return (saliency mask, flags) for one simple image."""
    sal = fg.copy()
    flags = {"dilated": False, "eroded": False, "extra_blob": False, "missed": False}
    u = rng.uniform()
    if u < spec.dilation_prob:
        r = int(rng.integers(spec.dilation_radius[0], spec.dilation_radius[1] + 1))
        sal = ndimage.binary_dilation(sal, structure=_disk(r))
        flags["dilated"] = True
    elif u < spec.dilation_prob + spec.erosion_prob:
        r = int(rng.integers(spec.erosion_radius[0], spec.erosion_radius[1] + 1))
        eroded = ndimage.binary_erosion(sal, structure=_disk(r))
        if eroded.any():
            sal = eroded
            flags["eroded"] = True
    if extra_blob and clutter.any():
        if rng.uniform() < spec.miss_prob:
            sal = np.zeros_like(sal)
            flags["missed"] = True
        sal = sal | clutter
        flags["extra_blob"] = True
    return sal, flags


def _save_rgb(path, img):
    Image.fromarray(np.round(img * 255).astype(np.uint8), mode="RGB").save(path)


def _save_gray(path, mask):
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(path)


def make_synthetic_dataset(spec, seed, root):
    """Write a fixture dataset to ``root`` and return a summary dict.

    Output is a pure function of ``(spec, seed)``: rerunning produces
    byte-identical files.
    """
    if isinstance(spec, dict):
        spec = FixtureSpec.from_dict(spec)
    spec.validate()
    root = Path(root)
    for sub in ("images", "saliency", "gt"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    C = spec.num_classes
    train_lines, val_lines = [], []
    corruption = {}

    def classes_for(n_obj):
        return sorted(int(c) for c in rng.choice(np.arange(1, C + 1), size=n_obj, replace=False))

    def emit(prefix, idx, n_obj, lines, train):
        image_id = f"{prefix}{idx:04d}"
        classes = classes_for(n_obj)
        simple = n_obj == 1
        extra_blob = train and simple and rng.uniform() < spec.extra_blob_prob
        with_clutter = extra_blob or rng.uniform() < spec.clutter_prob
        radius_range = spec.radius_range if simple else spec.complex_radius_range
        img, gt, clutter = render_image(rng, spec, classes, radius_range, with_clutter)
        _save_rgb(root / "images" / f"{image_id}.png", img)
        write_label(root / "gt" / f"{image_id}.png", gt)
        if train and simple:
            sal, flags = corrupt_saliency(rng, spec, gt > 0, clutter, extra_blob)
            _save_gray(root / "saliency" / f"{image_id}.png", sal)
            corruption[image_id] = flags
        lines.append(f"{image_id} " + " ".join(str(c) for c in classes))

    for i in range(spec.n_simple):
        emit("s", i, 1, train_lines, True)
    for i in range(spec.n_complex):
        emit("c", i, 2, train_lines, True)
    for i in range(spec.n_val_simple):
        emit("vs", i, 1, val_lines, False)
    for i in range(spec.n_val_complex):
        emit("vc", i, 2, val_lines, False)

    meta = DatasetMeta(C, ("background", *SHAPES[:C]))
    (root / "meta.json").write_text(json.dumps(meta.to_json(), indent=2) + "\n")
    (root / "tags.txt").write_text("\n".join(train_lines) + "\n")
    (root / "tags_val.txt").write_text("\n".join(val_lines) + ("\n" if val_lines else ""))
    (root / "corruption.json").write_text(json.dumps(corruption, indent=1, sort_keys=True) + "\n")
    (root / "fixture.json").write_text(json.dumps({"seed": seed, "spec": asdict(spec)}, indent=2) + "\n")
    n_blob = sum(f["extra_blob"] for f in corruption.values())
    return {
        "root": str(root),
        "n_train": len(train_lines),
        "n_val": len(val_lines),
        "extra_blob_rate": n_blob / max(len(corruption), 1),
    }


def load_corruption(root):
    path = Path(root) / "corruption.json"
    return json.loads(path.read_text()) if path.is_file() else {}
