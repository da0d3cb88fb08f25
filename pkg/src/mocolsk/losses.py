"""Training objectives and the learning-rate schedule.

Losses operate on de-normalized kelvin tensors, so the structural terms use
one dynamic range regardless of the input normalization strategy.
"""
from __future__ import annotations

import math

import torch
import torch.nn.functional as F

from .config import LossSpec

# Standard per-scale weights for the multi-scale structural term; truncated
# and renormalized when fewer scales are configured.
MS_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


def _check_shapes(pred: torch.Tensor, target: torch.Tensor):
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")


def l1_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    _check_shapes(pred, target)
    return (pred - target).abs().mean()


def gaussian_window(size: int, sigma: float, dtype=torch.float32, device=None) -> torch.Tensor:
    coords = torch.arange(size, dtype=dtype, device=device) - (size - 1) / 2.0
    g = torch.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    g = g / g.sum()
    return g.outer(g)


def _ssim_terms(pred, target, spec: LossSpec):
    """Windowed luminance-structure and contrast terms, valid windows only."""
    _check_shapes(pred, target)
    win = spec.window
    if pred.shape[-1] < win or pred.shape[-2] < win:
        raise ValueError(f"image {tuple(pred.shape[-2:])} smaller than window {win}")
    channels = pred.shape[1]
    kernel = gaussian_window(win, spec.sigma, dtype=pred.dtype, device=pred.device)
    kernel = kernel.expand(channels, 1, win, win)

    def mu(x):
        return F.conv2d(x, kernel, groups=channels)

    mu1, mu2 = mu(pred), mu(target)
    mu1_sq, mu2_sq, mu12 = mu1 * mu1, mu2 * mu2, mu1 * mu2
    sigma1_sq = mu(pred * pred) - mu1_sq
    sigma2_sq = mu(target * target) - mu2_sq
    sigma12 = mu(pred * target) - mu12
    c1 = (spec.k1 * spec.data_range) ** 2
    c2 = (spec.k2 * spec.data_range) ** 2
    cs = (2 * sigma12 + c2) / (sigma1_sq + sigma2_sq + c2)
    lum = (2 * mu12 + c1) / (mu1_sq + mu2_sq + c1)
    return lum * cs, cs


def ssim(pred: torch.Tensor, target: torch.Tensor, spec: LossSpec) -> torch.Tensor:
    full, _ = _ssim_terms(pred, target, spec)
    return full.mean()


def ms_ssim(pred: torch.Tensor, target: torch.Tensor, spec: LossSpec) -> torch.Tensor:
    scales = spec.ms_scales
    if scales == 1:
        return ssim(pred, target, spec)
    needed = spec.window * 2 ** (scales - 1)
    if min(pred.shape[-2:]) < needed:
        raise ValueError(
            f"image {tuple(pred.shape[-2:])} too small for {scales} scales (needs >= {needed})"
        )
    weights = torch.tensor(MS_WEIGHTS[:scales], dtype=pred.dtype, device=pred.device)
    weights = weights / weights.sum()
    terms = []
    for m in range(scales):
        full, cs = _ssim_terms(pred, target, spec)
        value = full.mean() if m == scales - 1 else cs.mean()
        terms.append(value.clamp(min=0.0) ** weights[m])
        if m < scales - 1:
            pred = F.avg_pool2d(pred, 2)
            target = F.avg_pool2d(target, 2)
    out = terms[0]
    for t in terms[1:]:
        out = out * t
    return out


def combined_loss(pred: torch.Tensor, target: torch.Tensor, spec: LossSpec) -> torch.Tensor:
    """Weighted sum of the configured terms; structural terms enter as 1 - value."""
    total = None
    for kind, weight in spec.terms:
        if weight == 0:
            continue
        if kind == "l1":
            term = l1_loss(pred, target)
        elif kind == "ssim":
            term = 1.0 - ssim(pred, target, spec)
        else:
            term = 1.0 - ms_ssim(pred, target, spec)
        term = weight * term
        total = term if total is None else total + term
    return total


def lr_schedule(step: int, lr0: float, t0: int, t_mult: int = 2, lr_min: float = 1e-6) -> float:
    """Cosine annealing with warm restarts; cycle j spans t0 * t_mult**j steps."""
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    t, cycle = int(step), int(t0)
    while t >= cycle:
        t -= cycle
        cycle *= t_mult
    return lr_min + (lr0 - lr_min) * (1.0 + math.cos(math.pi * t / cycle)) / 2.0
