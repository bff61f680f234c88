"""Progressive pixel-level noise detection.

Per-pixel cross-entropy against the pseudo label, a loss threshold that
decays stepwise after warm-up, and the segmentation loss averaged over the
pixels that survive the threshold. Tensors are channel-first:
probabilities ``(N, C, H, W)`` or ``(C, H, W)``, labels ``(N, H, W)`` or
``(H, W)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .data import IGNORE
from .exceptions import RangeError, ShapeError, SimplexError

SIMPLEX_TOL = 1e-5


@dataclass
class PixelLossMap:
    losses: torch.Tensor
    valid: torch.Tensor

    def drop(self, keep_images):
        """Invalidate whole images; ``keep_images`` is a boolean vector over N."""
        keep = torch.as_tensor(keep_images, dtype=torch.bool, device=self.valid.device)
        return PixelLossMap(self.losses, self.valid & keep.view(-1, *([1] * (self.valid.dim() - 1))))


@dataclass(frozen=True)
class ThresholdSchedule:
    """Loss threshold over training iterations.

    ``mode="per_step"`` spreads ``T_h - T_l`` over the number of decrement
    steps so the threshold lands on ``T_l`` at ``t_max``; ``mode="literal"``
    divides by ``t_max - t_w`` instead, which barely moves from ``T_h``.
    """

    t_w: int = 1000
    t_max: int = 11000
    t_s: int = 1000
    T_h: float = 1.2
    T_l: float = 0.8
    mode: str = "per_step"

    def __post_init__(self):
        if min(self.t_w, self.t_s) < 0 or self.t_s == 0 or self.t_max <= 0:
            raise RangeError("t_w >= 0, t_s > 0 and t_max > 0 are required")
        if self.t_w >= self.t_max:
            raise RangeError(f"t_w ({self.t_w}) must be smaller than t_max ({self.t_max})")
        if not self.T_h > self.T_l > 0:
            raise RangeError(f"need T_h > T_l > 0, got T_h={self.T_h}, T_l={self.T_l}")
        if self.mode not in ("per_step", "literal"):
            raise RangeError(f"unknown schedule mode {self.mode!r}")

    @property
    def n_decrements(self):
        return (self.t_max - self.t_w) // self.t_s

    @property
    def delta(self):
        if self.mode == "literal":
            return (self.T_h - self.T_l) / (self.t_max - self.t_w)
        return (self.T_h - self.T_l) / max(self.n_decrements, 1)


def current_threshold(sched, t):
    if not 1 <= t <= sched.t_max:
        raise RangeError(f"t={t} outside 1..{sched.t_max}")
    if t <= sched.t_w:
        return math.inf
    value = sched.T_h - ((t - sched.t_w) // sched.t_s) * sched.delta
    return max(value, sched.T_l)


def _as_tensor(x, dtype=None):
    if isinstance(x, torch.Tensor):
        return x if dtype is None else x.to(dtype)
    return torch.as_tensor(np.asarray(x), dtype=dtype)


def _check_pair(scores, labels):
    if scores.dim() == labels.dim() + 1 and scores.shape[-2:] == labels.shape[-2:] and scores.shape[:-3] == labels.shape[:-2]:
        return
    raise ShapeError(f"scores {tuple(scores.shape)} incompatible with labels {tuple(labels.shape)}")


def _gather_nll(log_probs, labels):
    valid = labels != IGNORE
    safe = torch.where(valid, labels, torch.zeros_like(labels))
    num_classes = log_probs.shape[-3]
    if bool((safe >= num_classes).any()) or bool((safe < 0).any()):
        raise ShapeError(f"label ids must be < {num_classes} or IGNORE")
    nll = -log_probs.gather(-3, safe.unsqueeze(-3)).squeeze(-3)
    return PixelLossMap(torch.where(valid, nll, torch.zeros_like(nll)), valid)


def pixel_losses(prediction, pseudo):
    """Cross-entropy ``-log p(y)`` at every pixel of a probability map."""
    probs = _as_tensor(prediction)
    if not probs.is_floating_point():
        probs = probs.double()
    labels = _as_tensor(pseudo).long()
    _check_pair(probs, labels)
    sums = probs.sum(dim=-3)
    if bool((probs < -SIMPLEX_TOL).any()) or bool(((sums - 1).abs() > SIMPLEX_TOL).any()):
        raise SimplexError("prediction channels must be nonnegative and sum to 1")
    return _gather_nll(torch.log(probs.clamp_min(torch.finfo(probs.dtype).tiny)), labels)


def pixel_losses_from_logits(logits, pseudo):
    """Same losses as :func:`pixel_losses`, computed stably from raw logits."""
    logits = _as_tensor(logits)
    labels = _as_tensor(pseudo).long()
    _check_pair(logits, labels)
    return _gather_nll(F.log_softmax(logits, dim=-3), labels)


def noise_mask(losses, T):
    """1 where a valid pixel's loss is at most ``T``, 0 elsewhere (including invalid pixels)."""
    with torch.no_grad():
        keep = losses.valid & (losses.losses <= T)
    return keep.to(losses.losses.dtype)


def masked_seg_loss(losses, mask):
    """Mean loss over kept pixels.

    Returns ``(loss, all_masked)``. When nothing is kept the loss is a zero
    that still participates in the graph but carries no gradient.
    """
    mask = _as_tensor(mask, dtype=losses.losses.dtype).detach()
    if mask.shape != losses.losses.shape:
        raise ShapeError(f"mask {tuple(mask.shape)} vs losses {tuple(losses.losses.shape)}")
    mask = mask * losses.valid.to(mask.dtype)
    kept = mask.sum()
    if kept.item() == 0:
        return (losses.losses * 0.0).sum(), True
    return (mask * losses.losses).sum() / kept, False
