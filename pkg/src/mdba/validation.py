"""Input validation helpers shared by the estimator and the CLI."""
from __future__ import annotations

import numpy as np

from .data import IGNORE, DatasetSplit, ImageRecord
from .exceptions import ClassRangeError, ShapeError


def check_images(X, allow_records=True):
    """Coerce images to a float32 ``(N, H, W, 3)`` array with values in [0, 1].

    Accepts an array, a list of H x W x 3 arrays, a single H x W x 3 image,
    or (when ``allow_records``) a sequence of :class:`ImageRecord`.
    """
    if allow_records and isinstance(X, (list, tuple)) and X and isinstance(X[0], ImageRecord):
        X = [r.image for r in X]
    arr = np.asarray(X, dtype=np.float32)
    if arr.ndim == 3 and arr.shape[-1] == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[-1] != 3:
        raise ShapeError(f"expected images shaped (N, H, W, 3), got {arr.shape}")
    if arr.size and (not np.isfinite(arr).all() or arr.min() < 0 or arr.max() > 1):
        raise ValueError("image intensities must be finite and lie in [0, 1]")
    return arr


def check_label_map(label, num_classes, allow_ignore=True, shape=None):
    label = np.asarray(label)
    if label.ndim != 2:
        raise ShapeError(f"label map must be H x W, got {label.shape}")
    if shape is not None and label.shape != tuple(shape):
        raise ShapeError(f"label map {label.shape} != expected {tuple(shape)}")
    valid = label != IGNORE if allow_ignore else np.ones(label.shape, dtype=bool)
    if valid.any() and (label[valid].min() < 0 or label[valid].max() >= num_classes):
        raise ClassRangeError(f"label ids must lie in 0..{num_classes - 1}" + (" or IGNORE" if allow_ignore else ""))
    return label


def check_records(X):
    """Return a list of records or raise ``TypeError``."""
    if isinstance(X, DatasetSplit):
        return list(X.simple) + list(X.complex)
    records = list(X)
    if not all(isinstance(r, ImageRecord) for r in records):
        raise TypeError("expected a sequence of ImageRecord or a DatasetSplit")
    return records


def infer_num_classes(records):
    top = 0
    for r in records:
        top = max(top, max(r.tags))
    return top
