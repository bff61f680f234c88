"""Segmentation backbone, classification head and multi-label loss.

Any ``nn.Module`` mapping ``(N, 3, H, W)`` images to ``(N, C, h, w)``
logits with ``h <= H``, ``w <= W`` can serve as the backbone; it should
expose ``num_classes`` and ``output_stride``. :class:`SmallSegNet` is the
reference implementation used at desk scale.
"""
from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .exceptions import ShapeError


def _stage(cin, cout, stride=1, dilation=1):
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, stride=stride, padding=dilation, dilation=dilation, bias=False),
        nn.BatchNorm2d(cout),
        nn.ReLU(inplace=True),
    )


class SmallSegNet(nn.Module):
    """Six-stage encoder with dilated context and an image-pooling branch.

    Output stride 4. The pooled branch gives every pixel a view of the whole
    image, the way large-receptive-field segmenters do.
    """

    output_stride = 4

    def __init__(self, num_classes, width=32, mean=(0.0, 0.0, 0.0), std=(1.0, 1.0, 1.0)):
        super().__init__()
        self.num_classes = num_classes
        self.width = width
        w = width
        self.register_buffer("mean", torch.tensor(mean, dtype=torch.float32).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(std, dtype=torch.float32).view(1, 3, 1, 1))
        self.encoder = nn.Sequential(
            _stage(3, w // 2),
            _stage(w // 2, w, stride=2),
            _stage(w, 2 * w, stride=2),
            _stage(2 * w, 2 * w, dilation=2),
            _stage(2 * w, 2 * w, dilation=4),
        )
        self.pool_proj = nn.Sequential(nn.Conv2d(2 * w, 2 * w, 1), nn.ReLU(inplace=True))
        self.classifier = nn.Conv2d(4 * w, num_classes, 1)

    def forward(self, x):
        if x.dim() != 4 or x.shape[1] != 3:
            raise ShapeError(f"expected (N, 3, H, W) images, got {tuple(x.shape)}")
        x = (x - self.mean) / self.std
        feats = self.encoder(x)
        pooled = self.pool_proj(feats.mean(dim=(2, 3), keepdim=True)).expand_as(feats)
        return self.classifier(torch.cat([feats, pooled], dim=1))


def build_backbone(name, num_classes, **kwargs):
    if name == "small":
        return SmallSegNet(num_classes, **kwargs)
    raise ValueError(f"unknown backbone {name!r}")


def count_parameters(module):
    return sum(p.numel() for p in module.parameters())


def upsample_logits(logits, size):
    if tuple(logits.shape[-2:]) == tuple(size):
        return logits
    return F.interpolate(logits, size=tuple(size), mode="bilinear", align_corners=False)


def segment(backbone, images):
    """Per-pixel class probabilities ``(N, C, H, W)`` at input resolution."""
    if images.dim() != 4:
        raise ShapeError(f"expected (N, 3, H, W) images, got {tuple(images.shape)}")
    logits = backbone(images)
    return F.softmax(upsample_logits(logits, images.shape[-2:]), dim=1)


def classification_logits(logits):
    """Drop the background channel and average each foreground channel spatially."""
    if logits.dim() == 3:
        return logits[1:].mean(dim=(-2, -1))
    return logits[:, 1:].mean(dim=(-2, -1))


def tags_to_target(tags, num_fg):
    """Multi-hot ``(N, C')`` target from a list of tag sets (class ids 1..C')."""
    out = np.zeros((len(tags), num_fg), dtype=np.float32)
    for i, ts in enumerate(tags):
        for t in ts:
            out[i, int(t) - 1] = 1.0
    return torch.from_numpy(out)


def classification_loss(logits, tags):
    """Multi-label soft margin loss averaged over foreground classes (and the batch).

    ``tags`` is either a multi-hot target shaped like ``logits`` or a tag
    set (a list of tag sets for batched logits).
    """
    if isinstance(tags, torch.Tensor):
        target = tags.to(logits.dtype)
    elif logits.dim() == 1:
        target = tags_to_target([tags], logits.shape[-1])[0].to(logits.dtype)
    else:
        target = tags_to_target(tags, logits.shape[-1]).to(logits.dtype)
    if target.shape != logits.shape:
        raise ShapeError(f"target {tuple(target.shape)} vs logits {tuple(logits.shape)}")
    per_class = target * F.logsigmoid(logits) + (1 - target) * F.logsigmoid(-logits)
    return -per_class.mean()
