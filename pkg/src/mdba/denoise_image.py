"""Online image-level noise filtering with class-adaptive thresholds."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
import torch

from .exceptions import EmptySetError, MissingThresholdError, RangeError
from .metrics import ConfusionMatrix, iou_report, noise_iou


@dataclass(frozen=True)
class ClassThresholdTable:
    alpha: float
    thresholds: Dict[int, float]
    computed_at_step: int = 0
    accuracies: Dict[int, Optional[float]] = field(default_factory=dict)

    def __getitem__(self, class_id):
        try:
            return self.thresholds[int(class_id)]
        except KeyError:
            raise MissingThresholdError(f"no threshold for class {class_id}") from None

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "thresholds": {str(k): v for k, v in self.thresholds.items()},
            "computed_at_step": self.computed_at_step,
            "accuracies": {str(k): v for k, v in self.accuracies.items()},
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            alpha=float(d["alpha"]),
            thresholds={int(k): float(v) for k, v in d["thresholds"].items()},
            computed_at_step=int(d["computed_at_step"]),
            accuracies={int(k): v for k, v in d.get("accuracies", {}).items()},
        )


@dataclass(frozen=True)
class FilterDecision:
    image_id: str
    noise_ratio: float
    threshold_used: float
    kept: bool


def threshold_from_accuracy(accuracy, alpha):
    """``1 - (a_c - alpha)`` clipped to [0, 1]; an undefined accuracy never filters."""
    if accuracy is None:
        return 1.0
    return min(1.0, max(0.0, 1.0 - (accuracy - alpha)))


def table_from_confusion(cm, alpha, step=0, class_ids=None):
    """Build the threshold table from a dataset-level confusion matrix."""
    if not 0.0 <= alpha < 1.0:
        raise RangeError(f"alpha must lie in [0, 1), got {alpha}")
    report = iou_report(cm)
    if class_ids is None:
        class_ids = range(1, cm.num_classes)
    accuracies = {int(c): report.per_class.get(int(c)) for c in class_ids}
    thresholds = {c: threshold_from_accuracy(a, alpha) for c, a in accuracies.items()}
    return ClassThresholdTable(alpha, thresholds, step, accuracies)


@torch.no_grad()
def predict_labels(model, images, batch_size=32, input_transform=None):
    """Argmax label maps at input resolution for an ``(N, H, W, 3)`` array."""
    from .model import segment  # local import keeps this module torch-light at import

    out = []
    for start in range(0, len(images), batch_size):
        chunk = torch.as_tensor(np.asarray(images[start:start + batch_size]), dtype=torch.float32)
        chunk = chunk.permute(0, 3, 1, 2)
        if input_transform is not None:
            chunk = input_transform(chunk)
        out.append(segment(model, chunk).argmax(dim=1).cpu().numpy().astype(np.uint8))
    return np.concatenate(out) if out else np.zeros((0,), dtype=np.uint8)


def compute_class_thresholds(model, simple_set, alpha, num_classes, step=0, batch_size=32,
                             input_transform=None, return_predictions=False):
    """Evaluate ``model`` on every simple image against its pseudo label and derive T_c.

    ``simple_set`` is a sequence of ``(image, pseudo_label)`` pairs with
    H x W x 3 images. ``num_classes`` counts background. The model runs in
    eval mode; its previous mode is restored afterwards.
    """
    if len(simple_set) == 0:
        raise EmptySetError("threshold evaluation needs at least one simple image")
    images = np.stack([np.asarray(img, dtype=np.float32) for img, _ in simple_set])
    labels = [np.asarray(lbl) for _, lbl in simple_set]
    was_training = getattr(model, "training", False)
    if hasattr(model, "eval"):
        model.eval()
    try:
        preds = predict_labels(model, images, batch_size, input_transform)
    finally:
        if was_training:
            model.train()
    cm = ConfusionMatrix(num_classes)
    for lbl, pred in zip(labels, preds):
        cm.update(lbl, pred)
    table = table_from_confusion(cm, alpha, step)
    if return_predictions:
        return table, preds
    return table


def filter_image(prediction, pseudo, tag, table, image_id="", scope="foreground"):
    """Keep or drop one simple image's pseudo label.

    ``prediction`` is a ``(C, H, W)`` probability map or an ``(H, W)`` label
    map. The noise ratio is ``1 - IoU`` of the tag class; a tag absent from
    both maps counts as perfect agreement.
    """
    threshold = table[tag]
    pred = np.asarray(prediction.detach().cpu() if isinstance(prediction, torch.Tensor) else prediction)
    if pred.ndim == 3:
        pred = pred.argmax(axis=0)
    iou = noise_iou(np.asarray(pseudo), pred, tag, scope)
    ratio = 0.0 if iou is None else 1.0 - iou
    return FilterDecision(image_id, ratio, threshold, ratio <= threshold)
