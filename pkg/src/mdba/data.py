"""Dataset ingestion and saliency-to-pseudo-label conversion.

On-disk layout::

    root/images/<id>.png|jpg     RGB image
    root/saliency/<id>.png       8-bit grayscale saliency, mapped to [0, 1]
    root/gt/<id>.png             optional 8-bit class-id mask (evaluation only)
    root/tags.txt                training index, ``<id> <tag1> [<tag2> ...]``
    root/tags_<split>.txt        index of any other split (e.g. ``tags_val.txt``)
    root/meta.json               ``{"num_classes": C', "class_names": [...]}``

Class id 0 is background, foreground tags run over ``1..C'`` and
:data:`IGNORE` marks pixels excluded from every loss and metric.
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from PIL import Image

from .exceptions import (
    EmptyTagsError,
    MalformedIndexError,
    MissingFileError,
    MultiTagError,
    ShapeError,
    TagRangeError,
)

logger = logging.getLogger(__name__)

BACKGROUND = 0
IGNORE = 255
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


def _frozen(array, dtype):
    if array is None:
        return None
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class ImageRecord:
    """One training or evaluation image.

    ``image`` is H x W x 3 float32 in [0, 1]. ``pseudo_label`` is attached
    to simple records by :func:`split_dataset`; ``gt`` is only ever used
    for evaluation.
    """

    id: str
    image: np.ndarray
    tags: frozenset
    saliency: Optional[np.ndarray] = None
    pseudo_label: Optional[np.ndarray] = None
    gt: Optional[np.ndarray] = None

    def __post_init__(self):
        tags = frozenset(int(t) for t in self.tags)
        if not tags:
            raise EmptyTagsError(f"record {self.id!r} has no tags")
        object.__setattr__(self, "tags", tags)
        object.__setattr__(self, "image", _frozen(self.image, np.float32))
        object.__setattr__(self, "saliency", _frozen(self.saliency, np.float32))
        object.__setattr__(self, "pseudo_label", _frozen(self.pseudo_label, np.uint8))
        object.__setattr__(self, "gt", _frozen(self.gt, np.uint8))
        hw = self.image.shape[:2]
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise ShapeError(f"record {self.id!r}: image must be H x W x 3, got {self.image.shape}")
        for name in ("saliency", "pseudo_label", "gt"):
            arr = getattr(self, name)
            if arr is not None and arr.shape != hw:
                raise ShapeError(f"record {self.id!r}: {name} shape {arr.shape} != image {hw}")

    @property
    def is_simple(self):
        return len(self.tags) == 1

    @property
    def tag(self):
        """The single foreground class of a simple record."""
        if len(self.tags) != 1:
            raise MultiTagError(f"record {self.id!r} has tags {sorted(self.tags)}")
        return next(iter(self.tags))

    def with_pseudo_label(self, pseudo_label):
        return ImageRecord(self.id, self.image, self.tags, self.saliency, pseudo_label, self.gt)


@dataclass
class DatasetSplit:
    """Simple (single-tag, pseudo-labelled) and complex (multi-tag) records."""

    simple: list = field(default_factory=list)
    complex: list = field(default_factory=list)

    def __len__(self):
        return len(self.simple) + len(self.complex)


@dataclass(frozen=True)
class DatasetMeta:
    num_classes: int
    class_names: tuple
    mean: tuple = (0.0, 0.0, 0.0)
    std: tuple = (1.0, 1.0, 1.0)

    @property
    def num_labels(self):
        """Segmentation classes including background."""
        return self.num_classes + 1

    def to_json(self):
        return {
            "num_classes": self.num_classes,
            "class_names": list(self.class_names),
            "mean": list(self.mean),
            "std": list(self.std),
        }


def generate_pseudo_label(saliency, tags, binarize_threshold=0.5, image_shape=None):
    """Assign the image's single tag to every salient pixel.

    Pixels with salience ``>= binarize_threshold`` receive the tag's class
    id, all others background. Only simple images are eligible.
    """
    tags = frozenset(int(t) for t in tags)
    if len(tags) != 1:
        raise MultiTagError(f"pseudo labels need exactly one tag, got {sorted(tags)}")
    if not 0.0 < binarize_threshold < 1.0:
        raise ValueError(f"binarize_threshold must lie in (0, 1), got {binarize_threshold}")
    saliency = np.asarray(saliency, dtype=np.float64)
    if saliency.ndim != 2:
        raise ShapeError(f"saliency must be H x W, got {saliency.shape}")
    if image_shape is not None and tuple(image_shape[:2]) != saliency.shape:
        raise ShapeError(f"saliency {saliency.shape} does not match image {tuple(image_shape[:2])}")
    (tag,) = tags
    if not 0 < tag < IGNORE:
        raise TagRangeError(f"tag {tag} is not a foreground class id")
    label = np.zeros(saliency.shape, dtype=np.uint8)
    label[saliency >= binarize_threshold] = tag
    return label


def split_dataset(records, binarize_threshold=0.5):
    """Partition records by tag count, attaching pseudo labels to simple ones."""
    split = DatasetSplit()
    seen = set()
    for rec in records:
        if not rec.tags:
            raise EmptyTagsError(f"record {rec.id!r} has no tags")
        if rec.id in seen:
            raise MalformedIndexError(f"duplicate record id {rec.id!r}")
        seen.add(rec.id)
        if rec.is_simple:
            if rec.saliency is None:
                raise MissingFileError(f"simple record {rec.id!r} has no saliency map")
            label = generate_pseudo_label(rec.saliency, rec.tags, binarize_threshold, rec.image.shape)
            split.simple.append(rec.with_pseudo_label(label))
        else:
            split.complex.append(rec)
    return split


def load_meta(root):
    path = Path(root) / "meta.json"
    if not path.is_file():
        raise MissingFileError(f"missing {path}")
    try:
        raw = json.loads(path.read_text())
        num_classes = int(raw["num_classes"])
    except (ValueError, KeyError, TypeError) as exc:
        raise MalformedIndexError(f"{path}: {exc}") from exc
    names = raw.get("class_names") or [f"class{i}" for i in range(num_classes + 1)]
    if len(names) == num_classes:
        names = ["background", *names]
    if len(names) != num_classes + 1:
        raise MalformedIndexError(f"{path}: expected {num_classes + 1} class names, got {len(names)}")
    return DatasetMeta(
        num_classes=num_classes,
        class_names=tuple(names),
        mean=tuple(raw.get("mean", (0.0, 0.0, 0.0))),
        std=tuple(raw.get("std", (1.0, 1.0, 1.0))),
    )


def index_path(root, split="train"):
    root = Path(root)
    return root / "tags.txt" if split in (None, "train") else root / f"tags_{split}.txt"


def parse_index(lines, num_classes, source="tags.txt"):
    """Parse ``<id> <tag> [...]`` lines into ``(id, frozenset(tags))`` pairs."""
    entries = []
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) < 2:
            raise MalformedIndexError(f"{source}:{lineno}: expected '<id> <tag> [...]', got {line!r}")
        try:
            tags = [int(f) for f in fields[1:]]
        except ValueError as exc:
            raise MalformedIndexError(f"{source}:{lineno}: non-integer tag in {line!r}") from exc
        for tag in tags:
            if not 1 <= tag <= num_classes:
                raise TagRangeError(f"{source}:{lineno}: tag {tag} outside 1..{num_classes}")
        entries.append((fields[0], frozenset(tags)))
    return entries


def _find_image(root, image_id):
    for suffix in IMAGE_SUFFIXES:
        path = root / "images" / f"{image_id}{suffix}"
        if path.is_file():
            return path
    raise MissingFileError(f"no image file for id {image_id!r} under {root / 'images'}")


def read_image(path):
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0


def read_gray(path):
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.float32) / 255.0


def read_label(path):
    with Image.open(path) as im:
        if im.mode not in ("L", "P"):
            im = im.convert("L")
        return np.asarray(im, dtype=np.uint8)


def write_label(path, label):
    Image.fromarray(np.asarray(label, dtype=np.uint8), mode="L").save(path)


def _load_record(root, image_id, tags, require_saliency):
    image = read_image(_find_image(root, image_id))
    sal_path = root / "saliency" / f"{image_id}.png"
    saliency = None
    if sal_path.is_file():
        saliency = read_gray(sal_path)
    elif require_saliency and len(tags) == 1:
        raise MissingFileError(f"simple image {image_id!r} has no saliency map at {sal_path}")
    gt_path = root / "gt" / f"{image_id}.png"
    gt = read_label(gt_path) if gt_path.is_file() else None
    return ImageRecord(image_id, image, tags, saliency, None, gt)


def load_dataset(root, split="train", require_saliency=None, n_jobs=1):
    """Read one split of a dataset into :class:`ImageRecord` objects.

    Records come back sorted by id regardless of ``n_jobs``. Saliency is
    mandatory for simple training images; for other splits it is loaded
    when present.
    """
    root = Path(root)
    meta = load_meta(root)
    path = index_path(root, split)
    if not path.is_file():
        raise MissingFileError(f"missing index file {path}")
    entries = parse_index(path.read_text().splitlines(), meta.num_classes, source=path.name)
    ids = [e[0] for e in entries]
    if len(set(ids)) != len(ids):
        raise MalformedIndexError(f"{path}: duplicate ids")
    entries.sort(key=lambda e: e[0])
    if require_saliency is None:
        require_saliency = split in (None, "train")

    def load(entry):
        return _load_record(root, entry[0], entry[1], require_saliency)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(load, entries))
    return [load(e) for e in entries]


def records_to_arrays(records: Sequence[ImageRecord], attr: str = "image") -> np.ndarray:
    return np.stack([getattr(r, attr) for r in records])


def tag_histogram(records: Iterable[ImageRecord], num_classes: int) -> np.ndarray:
    counts = np.zeros(num_classes + 1, dtype=np.int64)
    for rec in records:
        for t in rec.tags:
            counts[t] += 1
    return counts
