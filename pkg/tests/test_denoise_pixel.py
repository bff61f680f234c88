import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from mdba.data import IGNORE
from mdba.denoise_pixel import (
    PixelLossMap,
    ThresholdSchedule,
    current_threshold,
    masked_seg_loss,
    noise_mask,
    pixel_losses,
    pixel_losses_from_logits,
)
from mdba.exceptions import RangeError, ShapeError, SimplexError

DEFAULTS = dict(t_w=1000, t_max=11000, t_s=1000, T_h=1.2, T_l=0.8)


def loss_map(values, valid=None):
    values = torch.tensor(values, dtype=torch.float64)
    valid = torch.ones_like(values, dtype=torch.bool) if valid is None else torch.tensor(valid)
    return PixelLossMap(values, valid)


def test_pixel_losses_examples():
    p = np.zeros((2, 1, 2))
    p[0] = 1.0  # class 0 certain everywhere
    out = pixel_losses(p, np.zeros((1, 2), dtype=np.int64))
    assert torch.all(out.losses == 0)
    e = math.exp(-1)
    p = np.array([[[e]], [[1 - e]]])
    assert pixel_losses(p, [[0]]).losses.item() == pytest.approx(1.0, abs=1e-12)
    uniform = np.full((4, 3, 3), 0.25)
    out = pixel_losses(uniform, np.arange(9).reshape(3, 3) % 4)
    assert torch.allclose(out.losses, torch.full((3, 3), math.log(4), dtype=torch.float64))


def test_pixel_losses_ignore_and_errors():
    p = np.full((2, 1, 2), 0.5)
    out = pixel_losses(p, [[IGNORE, 1]])
    assert out.valid.tolist() == [[False, True]]
    assert out.losses[0, 0] == 0
    with pytest.raises(SimplexError):
        pixel_losses(np.full((2, 1, 1), 0.6), [[0]])
    with pytest.raises(ShapeError):
        pixel_losses(np.full((2, 2, 2), 0.5), [[0]])
    # inside tolerance passes
    pixel_losses(np.array([[[0.5 + 4e-6]], [[0.5]]]), [[0]])


def test_logit_and_prob_paths_agree():
    g = torch.Generator().manual_seed(0)
    logits = torch.randn(2, 4, 5, 5, generator=g, dtype=torch.float64)
    labels = torch.randint(0, 4, (2, 5, 5), generator=g)
    a = pixel_losses(torch.softmax(logits, dim=1), labels).losses
    b = pixel_losses_from_logits(logits, labels).losses
    assert torch.allclose(a, b, atol=1e-12)


def test_schedule_examples():
    s = ThresholdSchedule(**DEFAULTS)
    assert s.delta == pytest.approx(0.04, abs=1e-15)
    assert current_threshold(s, 500) == math.inf
    assert current_threshold(s, 1000) == math.inf
    assert current_threshold(s, 1500) == 1.2
    assert current_threshold(s, 5500) == pytest.approx(1.04, abs=1e-12)
    assert current_threshold(s, 11000) == pytest.approx(0.8, abs=1e-12)
    # oracle tabulation of every decrement step
    for k in range(11):
        t = 1000 + k * 1000 + (500 if k < 10 else 0)
        assert current_threshold(s, t) == pytest.approx(1.2 - k * 0.04, abs=1e-12)


def test_schedule_is_monotone_everywhere():
    s = ThresholdSchedule(**DEFAULTS)
    values = [current_threshold(s, t) for t in range(1, 11001)]
    assert all(b <= a for a, b in zip(values, values[1:]))
    assert min(values) == pytest.approx(0.8)


def test_schedule_literal_mode():
    s = ThresholdSchedule(**DEFAULTS, mode="literal")
    assert s.delta == pytest.approx(0.4 / 10000)
    assert current_threshold(s, 11000) == pytest.approx(1.2 - 10 * 4e-5)


def test_schedule_errors():
    s = ThresholdSchedule(**DEFAULTS)
    with pytest.raises(RangeError):
        current_threshold(s, 0)
    with pytest.raises(RangeError):
        current_threshold(s, 11001)
    with pytest.raises(ValueError):
        ThresholdSchedule(t_w=10, t_max=100, t_s=10, T_h=0.8, T_l=1.2)


def test_noise_mask_examples():
    losses = loss_map([[0.5, 1.5], [1.0, 2.0]])
    assert noise_mask(losses, 1.2).tolist() == [[1, 0], [1, 0]]
    assert noise_mask(losses, math.inf).tolist() == [[1, 1], [1, 1]]
    assert noise_mask(losses, 0.1).sum() == 0
    partial = loss_map([[0.5, 1.5]], [[False, True]])
    assert noise_mask(partial, math.inf).tolist() == [[0, 1]]


def test_masked_loss_examples():
    losses = loss_map([[0.5, 1.5], [1.0, 2.0]])
    loss, flag = masked_seg_loss(losses, [[1, 0], [1, 0]])
    assert loss.item() == pytest.approx(0.75) and not flag
    loss, _ = masked_seg_loss(losses, torch.ones(2, 2))
    assert loss.item() == pytest.approx(1.25)
    loss, flag = masked_seg_loss(losses, torch.zeros(2, 2))
    assert loss.item() == 0 and flag


def test_all_masked_carries_no_gradient():
    logits = torch.randn(1, 3, 4, 4, dtype=torch.float64, requires_grad=True)
    losses = pixel_losses_from_logits(logits, torch.zeros(1, 4, 4, dtype=torch.long))
    loss, flag = masked_seg_loss(losses, noise_mask(losses, 0.0))
    assert flag
    loss.backward()
    assert torch.all(logits.grad == 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.05, 3.0), st.floats(0.0, 2.0))
def test_mask_monotone_and_loss_bounded(seed, T, bump):
    g = torch.Generator().manual_seed(seed)
    logits = torch.randn(2, 3, 4, 4, generator=g, dtype=torch.float64)
    labels = torch.randint(0, 3, (2, 4, 4), generator=g)
    losses = pixel_losses_from_logits(logits, labels)
    low, high = noise_mask(losses, T), noise_mask(losses, T + bump)
    assert torch.all(high >= low)
    loss, flag = masked_seg_loss(losses, low)
    if not flag:
        assert loss.item() <= T + 1e-12


def test_masked_loss_gradient_matches_finite_differences():
    g = torch.Generator().manual_seed(3)
    logits = torch.randn(1, 3, 4, 4, generator=g, dtype=torch.float64, requires_grad=True)
    labels = torch.randint(0, 3, (1, 4, 4), generator=g)
    labels[0, 0, 0] = IGNORE
    mask = noise_mask(pixel_losses_from_logits(logits, labels), 1.2)

    def f(x):
        return masked_seg_loss(pixel_losses_from_logits(x, labels), mask)[0]

    f(logits).backward()
    eps = 1e-6
    num = torch.zeros_like(logits)
    flat = logits.detach().clone().view(-1)
    for i in range(flat.numel()):
        plus, minus = flat.clone(), flat.clone()
        plus[i] += eps
        minus[i] -= eps
        num.view(-1)[i] = (f(plus.view_as(logits)) - f(minus.view_as(logits))) / (2 * eps)
    scale = num.abs().max()
    assert torch.allclose(logits.grad, num, rtol=1e-4, atol=1e-4 * scale.item())
