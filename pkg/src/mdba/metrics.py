"""Confusion-matrix accumulation and IoU reporting."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from .data import IGNORE
from .exceptions import ClassRangeError, ShapeError


class ConfusionMatrix:
    """Dataset-level pixel counts; ``counts[i, j]`` = reference i predicted as j.

    Reference pixels equal to :data:`IGNORE` are skipped. Partial matrices
    accumulated independently merge with ``+``.
    """

    def __init__(self, num_classes, counts=None):
        self.num_classes = int(num_classes)
        if counts is None:
            counts = np.zeros((self.num_classes, self.num_classes), dtype=np.int64)
        counts = np.asarray(counts, dtype=np.int64)
        if counts.shape != (self.num_classes, self.num_classes):
            raise ShapeError(f"counts must be {self.num_classes}x{self.num_classes}, got {counts.shape}")
        if (counts < 0).any():
            raise ValueError("confusion counts must be nonnegative")
        self.counts = counts

    def copy(self):
        return ConfusionMatrix(self.num_classes, self.counts.copy())

    def update(self, reference, prediction):
        """Add one (reference, prediction) pair of label maps in place."""
        reference = np.asarray(reference)
        prediction = np.asarray(prediction)
        if reference.shape != prediction.shape:
            raise ShapeError(f"reference {reference.shape} vs prediction {prediction.shape}")
        valid = reference != IGNORE
        ref = reference[valid].astype(np.int64)
        pred = prediction[valid].astype(np.int64)
        n = self.num_classes
        if ref.size and (ref.min() < 0 or ref.max() >= n):
            raise ClassRangeError(f"reference ids must be in 0..{n - 1} or IGNORE")
        if pred.size and (pred.min() < 0 or pred.max() >= n):
            raise ClassRangeError(f"prediction ids must be in 0..{n - 1}")
        self.counts += np.bincount(ref * n + pred, minlength=n * n).reshape(n, n)
        return self

    def __add__(self, other):
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        if other.num_classes != self.num_classes:
            raise ShapeError("cannot merge confusion matrices of different size")
        return ConfusionMatrix(self.num_classes, self.counts + other.counts)

    def __eq__(self, other):
        return (
            isinstance(other, ConfusionMatrix)
            and other.num_classes == self.num_classes
            and np.array_equal(other.counts, self.counts)
        )

    def __repr__(self):
        return f"ConfusionMatrix(num_classes={self.num_classes}, total={int(self.counts.sum())})"


def accumulate(cm, reference, prediction):
    """Functional form of :meth:`ConfusionMatrix.update`; ``cm`` is not modified."""
    return cm.copy().update(reference, prediction)


@dataclass(frozen=True)
class ClassIoUReport:
    per_class: Dict[int, Optional[float]]
    miou: Optional[float]

    @property
    def defined(self):
        return {c: v for c, v in self.per_class.items() if v is not None}

    def format(self, class_names=None):
        lines = []
        for c, v in sorted(self.per_class.items()):
            name = class_names[c] if class_names is not None else str(c)
            lines.append(f"{name} {'nan' if v is None else format(v, '.6f')}")
        lines.append(f"mIoU {'nan' if self.miou is None else format(self.miou, '.6f')}")
        return "\n".join(lines) + "\n"


def iou_report(cm):
    counts = cm.counts
    tp = np.diag(counts)
    denom = counts.sum(axis=0) + counts.sum(axis=1) - tp
    per_class = {}
    for c in range(cm.num_classes):
        per_class[c] = float(tp[c] / denom[c]) if denom[c] > 0 else None
    values = [v for v in per_class.values() if v is not None]
    miou = float(np.mean(values)) if values else None
    return ClassIoUReport(per_class, miou)


def write_report(report, path, class_names=None):
    path = Path(path)
    path.write_text(report.format(class_names))
    return path


def read_report(path):
    """Parse a report file back into ``{name: value}`` (``None`` for nan)."""
    out = {}
    for line in Path(path).read_text().splitlines():
        name, value = line.rsplit(" ", 1)
        out[name] = None if value == "nan" else float(value)
    return out


def image_iou(reference, prediction, class_id):
    """IoU of a single class within one image; ``None`` if the class is absent from both."""
    reference = np.asarray(reference)
    prediction = np.asarray(prediction)
    if reference.shape != prediction.shape:
        raise ShapeError(f"reference {reference.shape} vs prediction {prediction.shape}")
    valid = reference != IGNORE
    ref = (reference == class_id) & valid
    pred = (prediction == class_id) & valid
    union = np.count_nonzero(ref | pred)
    if union == 0:
        return None
    return np.count_nonzero(ref & pred) / union


def noise_iou(reference, prediction, tag, scope="foreground"):
    """Agreement between a pseudo label and a prediction used for noise ratios.

    ``scope="foreground"`` scores the tag class alone; ``"all"`` averages the
    IoU of background and the tag class.
    """
    if scope == "foreground":
        return image_iou(reference, prediction, tag)
    if scope == "all":
        vals = [v for v in (image_iou(reference, prediction, 0), image_iou(reference, prediction, tag)) if v is not None]
        return float(np.mean(vals)) if vals else None
    raise ValueError(f"unknown noise_iou_scope {scope!r}")
