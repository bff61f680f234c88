"""Output-space adversarial alignment: discriminator and its two losses."""
from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .data import IGNORE
from .exceptions import ClassRangeError, NumericalError, ShapeError

SCORE_EPS = 1e-7
N_STAGES = 5


class Discriminator(nn.Module):
    """Fully convolutional discriminator over C-channel probability maps.

    Five 4x4 stride-2 convolutions with widths ``ndf * (1, 2, 4, 8)`` and a
    final single-channel stage; leaky ReLU (0.2) after all but the last.
    ``forward`` returns logits, :meth:`score` the sigmoid of them.
    """

    def __init__(self, num_classes, ndf=64, init_std=0.02):
        super().__init__()
        self.num_classes = num_classes
        self.ndf = ndf
        widths = [num_classes, ndf, ndf * 2, ndf * 4, ndf * 8, 1]
        layers = []
        for i in range(N_STAGES):
            layers.append(nn.Conv2d(widths[i], widths[i + 1], kernel_size=4, stride=2, padding=1))
            if i < N_STAGES - 1:
                layers.append(nn.LeakyReLU(0.2))
        self.net = nn.Sequential(*layers)
        for m in self.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.normal_(m.weight, 0.0, init_std)
                nn.init.zeros_(m.bias)

    def forward(self, x):
        if x.dim() != 4 or x.shape[1] != self.num_classes:
            raise ShapeError(f"expected (N, {self.num_classes}, H, W), got {tuple(x.shape)}")
        if min(x.shape[-2:]) < 2 ** N_STAGES:
            raise ShapeError(f"input {tuple(x.shape[-2:])} too small for {N_STAGES} stride-2 stages")
        return self.net(x)

    def score(self, x):
        return torch.sigmoid(self.forward(x))


def discriminator_forward(net, x):
    """Sigmoid score map of ``net`` on ``x``; accepts ``(C, H, W)`` or ``(N, C, H, W)``."""
    x = torch.as_tensor(x, dtype=torch.float32) if not isinstance(x, torch.Tensor) else x
    squeeze = x.dim() == 3
    if squeeze:
        x = x.unsqueeze(0)
    out = net.score(x)
    return out[0] if squeeze else out


def one_hot(pseudo, num_classes, ignore_fill=None):
    """Channel-first one-hot encoding of a label map.

    IGNORE pixels become all-zero columns, or the one-hot of ``ignore_fill``
    when that is given (e.g. ``0`` to fill with background).
    """
    labels = torch.as_tensor(np.asarray(pseudo)) if not isinstance(pseudo, torch.Tensor) else pseudo
    labels = labels.long()
    ignore = labels == IGNORE
    bad = (~ignore) & ((labels < 0) | (labels >= num_classes))
    if bool(bad.any()):
        raise ClassRangeError(f"label ids must be < {num_classes} or IGNORE")
    fill = 0 if ignore_fill is None else int(ignore_fill)
    if not 0 <= fill < num_classes:
        raise ClassRangeError(f"ignore_fill {fill} outside 0..{num_classes - 1}")
    safe = torch.where(ignore, torch.full_like(labels, fill), labels)
    out = F.one_hot(safe, num_classes).movedim(-1, -3).float()
    if ignore_fill is None:
        out = out * (~ignore).unsqueeze(-3).float()
    return out


def _check_scores(scores):
    if not bool(torch.isfinite(scores).all()):
        raise NumericalError("discriminator produced non-finite scores")


def _neg_log(scores, from_logits):
    # -log D
    if from_logits:
        return F.softplus(-scores)
    return -torch.log(scores.clamp(SCORE_EPS, 1 - SCORE_EPS))


def _neg_log_complement(scores, from_logits):
    # -log(1 - D)
    if from_logits:
        return F.softplus(scores)
    return -torch.log1p(-scores.clamp(SCORE_EPS, 1 - SCORE_EPS))


def discriminator_loss(score_pred=None, score_gt=None, from_logits=False):
    """Spatial mean of ``-log(1 - D(P))`` on predictions plus ``-log D(Y)`` on labels.

    Either side may be ``None`` for a one-sided batch. With
    ``from_logits=True`` the inputs are pre-sigmoid discriminator outputs.
    """
    if score_pred is None and score_gt is None:
        raise ValueError("discriminator_loss needs at least one score map")
    total = 0.0
    if score_pred is not None:
        _check_scores(score_pred)
        total = total + _neg_log_complement(score_pred, from_logits).mean()
    if score_gt is not None:
        _check_scores(score_gt)
        total = total + _neg_log(score_gt, from_logits).mean()
    return total


def adversarial_loss(score_pred, from_logits=False):
    """Spatial mean of ``-log D(P)``: small when predictions pass as labels."""
    _check_scores(score_pred)
    return _neg_log(score_pred, from_logits).mean()


def set_requires_grad(module, flag):
    for p in module.parameters():
        p.requires_grad_(flag)
