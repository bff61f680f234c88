"""Box-mask CutMix for segmentation: synthesize multi-class pairs from simple ones."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
import torch

from .exceptions import InvalidRangeError, ShapeError


@dataclass(frozen=True)
class MixMask:
    mask: np.ndarray
    box: Tuple[int, int, int, int]  # top, left, height, width

    @property
    def area_fraction(self):
        return self.box[2] * self.box[3] / self.mask.size


@dataclass(frozen=True)
class SyntheticPair:
    image: object
    label: object
    tags: frozenset
    sources: Tuple[str, str] = ("", "")


def _feasible_boxes(H, W, lo, hi):
    total = H * W
    heights, widths = [], []
    for h in range(1, H + 1):
        w_min = max(1, -(-int(np.ceil(lo * total - 1e-9)) // h))
        w_max = min(W, int(np.floor(hi * total + 1e-9)) // h)
        while w_min <= w_max and h * w_min >= total:
            w_min += 1
        while w_max >= w_min and h * w_max >= total:
            w_max -= 1
        if w_min <= w_max:
            heights.append(h)
            widths.append((w_min, w_max))
    return heights, widths


def sample_mix_mask(H, W, area_fraction_range=(0.2, 0.5), rng=None):
    """Draw a single axis-aligned box whose area fraction lies in the range.

    A target fraction is drawn uniformly, the box height uniformly among
    heights admitting a width in range, and the width as close to the target
    as the range allows.
    """
    lo, hi = area_fraction_range
    if not 0 < lo <= hi < 1:
        raise InvalidRangeError(f"need 0 < lo <= hi < 1, got ({lo}, {hi})")
    rng = np.random.default_rng(rng)
    heights, widths = _feasible_boxes(H, W, lo, hi)
    if not heights:
        raise InvalidRangeError(f"no box on a {H}x{W} grid has area fraction in [{lo}, {hi}]")
    target = rng.uniform(lo, hi) * H * W
    k = int(rng.integers(len(heights)))
    h = heights[k]
    w_min, w_max = widths[k]
    w = int(min(max(round(target / h), w_min), w_max))
    top = int(rng.integers(0, H - h + 1))
    left = int(rng.integers(0, W - w + 1))
    mask = np.zeros((H, W), dtype=np.uint8)
    mask[top:top + h, left:left + w] = 1
    mask.setflags(write=False)
    return MixMask(mask, (top, left, h, w))


def _select(mask, a, b, channel_axis=None):
    if isinstance(a, torch.Tensor):
        m = torch.from_numpy(np.array(mask, dtype=bool)).to(a.device)
        if channel_axis is not None:
            m = m.unsqueeze(channel_axis % a.dim())
        return torch.where(m, a, b)
    a, b = np.asarray(a), np.asarray(b)
    m = np.asarray(mask).astype(bool)
    if channel_axis is not None:
        m = np.expand_dims(m, channel_axis % a.ndim)
    return np.where(m, a, b)


def cutmix(a, b, mask, channel_axis=-1):
    """Combine ``a = (image, label, tags[, id])`` and ``b`` under ``mask``.

    Inside the box pixels come from ``a``, outside from ``b``, for image and
    label alike. ``channel_axis`` locates the colour axis of the images
    (``-1`` for H x W x 3, ``0`` for 3 x H x W tensors).
    """
    mask_arr = mask.mask if isinstance(mask, MixMask) else np.asarray(mask)
    img_a, lbl_a, tags_a = a[:3]
    img_b, lbl_b, tags_b = b[:3]
    hw = tuple(mask_arr.shape)
    for name, arr in (("label_a", lbl_a), ("label_b", lbl_b)):
        if tuple(arr.shape) != hw:
            raise ShapeError(f"{name} shape {tuple(arr.shape)} != mask {hw}")
    for name, arr in (("image_a", img_a), ("image_b", img_b)):
        spatial = list(arr.shape)
        del spatial[channel_axis % len(spatial)]
        if tuple(spatial) != hw:
            raise ShapeError(f"{name} shape {tuple(arr.shape)} incompatible with mask {hw}")
    if tuple(img_a.shape) != tuple(img_b.shape):
        raise ShapeError("source images differ in shape")
    image = _select(mask_arr, img_a, img_b, channel_axis)
    label = _select(mask_arr, lbl_a, lbl_b)
    sources = (a[3] if len(a) > 3 else "", b[3] if len(b) > 3 else "")
    return SyntheticPair(image, label, frozenset(tags_a) | frozenset(tags_b), sources)
