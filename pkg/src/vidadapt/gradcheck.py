"""Central finite-difference checks for every differentiable loss surface.

Each check compares autograd gradients against (f(x+h) − f(x−h)) / 2h per
element, in double precision, at inputs chosen away from the kinks of the
absolute-value terms.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
import torch

from . import losses
from .histogram import soft_histogram_torch


def finite_difference_gradient(
    fn: Callable[[torch.Tensor], torch.Tensor], x: torch.Tensor, h: float = 1e-6
) -> torch.Tensor:
    """Central-difference gradient of a scalar function, element by element."""
    x = x.detach().clone().to(torch.float64)
    grad = torch.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + h
        f_plus = float(fn(x).detach())
        flat[i] = orig - h
        f_minus = float(fn(x).detach())
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def max_relative_error(analytic: torch.Tensor, numeric: torch.Tensor) -> float:
    """Max per-element |analytic − numeric| scaled by the gradient magnitude."""
    analytic = analytic.detach().to(torch.float64)
    numeric = numeric.to(torch.float64)
    scale = max(float(numeric.abs().max()), float(analytic.abs().max()), 1e-8)
    return float((analytic - numeric).abs().max()) / scale


def check_gradient(
    fn: Callable[[torch.Tensor], torch.Tensor], x: torch.Tensor, h: float = 1e-6
) -> float:
    """Run autograd vs finite differences on one input; returns max relative error."""
    x = x.detach().to(torch.float64).requires_grad_(True)
    out = fn(x)
    if out.numel() != 1:
        raise ValueError(f"check_gradient needs a scalar function, got shape {tuple(out.shape)}")
    (analytic,) = torch.autograd.grad(out, x)
    numeric = finite_difference_gradient(fn, x, h)
    return max_relative_error(analytic, numeric)


def _away_from_kinks(rng: np.random.Generator, shape) -> tuple[torch.Tensor, torch.Tensor]:
    """A (prediction, target) pair whose differences stay ≥ 0.05 from zero."""
    target = torch.from_numpy(rng.uniform(-0.5, 0.5, size=shape))
    offset = rng.uniform(0.05, 0.3, size=shape) * rng.choice([-1.0, 1.0], size=shape)
    pred = target + torch.from_numpy(offset)
    return pred, target


def run_all_checks(seed: int = 0, h: float = 1e-6) -> dict[str, float]:
    """Gradient-check every loss term and the soft histogram; name → max rel error.

    Tensors stay at ≤ 64 elements so the element-wise sweep is fast.
    """
    rng = np.random.default_rng(seed)
    results: dict[str, float] = {}

    pred, target = _away_from_kinks(rng, (15,))
    results["hist_loss"] = check_gradient(lambda x: losses.hist_loss(x, target), pred, h)

    orig = tuple(torch.from_numpy(rng.uniform(0.05, 0.95, size=(1, 3, 3, 3))) for _ in range(2))
    off = tuple(
        torch.from_numpy(
            rng.uniform(0.05, 0.2, size=(1, 3, 3, 3)) * rng.choice([-1.0, 1.0], size=(1, 3, 3, 3))
        )
        for _ in range(2)
    )
    rec0 = orig[0] + off[0]

    def cyc_fn(x):
        return losses.cycle_loss(orig, (x, orig[1] + off[1]))

    results["cycle_loss"] = check_gradient(cyc_fn, rec0, h)

    def idt_fn(x):
        return losses.identity_loss((x, orig[1] + off[1]), orig)

    results["identity_loss"] = check_gradient(idt_fn, rec0, h)

    scores = torch.from_numpy(rng.uniform(-1.0, 2.0, size=(1, 1, 4, 4)))
    results["adversarial_g"] = check_gradient(losses.adversarial_g, scores, h)
    real_scores = torch.from_numpy(rng.uniform(-1.0, 2.0, size=(1, 1, 4, 4)))

    def adv_d_fn(x):
        return losses.adversarial_d(real_scores, x)

    results["adversarial_d"] = check_gradient(adv_d_fn, scores, h)

    iv_fake = torch.from_numpy(rng.uniform(-1.0, 2.0, size=(4,)))
    results["intra_video_g"] = check_gradient(losses.intra_video_g, iv_fake, h)
    iv_real = torch.from_numpy(rng.uniform(-1.0, 2.0, size=(4,)))

    def iv_c_fn(x):
        return losses.intra_video_c(iv_real, x)

    results["intra_video_c"] = check_gradient(iv_c_fn, iv_fake, h)

    # soft histogram: check each output bin as its own scalar function
    values = torch.from_numpy(rng.uniform(0.05, 0.95, size=(4, 3)))
    bins, temperature = 5, 0.05
    worst = 0.0
    for b in range(bins):
        for c in range(3):

            def bin_fn(x, b=b, c=c):
                return soft_histogram_torch(x, bins, temperature)[b, c]

            worst = max(worst, check_gradient(bin_fn, values, h))
    results["soft_channel_histogram"] = worst
    return results
