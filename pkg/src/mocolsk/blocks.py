"""Reusable network blocks: attention, residual groups, projections, pooling, MLPs."""
from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError

# Transposed/strided conv parameters (kernel, stride, padding) per scale factor.
PROJECTION_PARAMS = {2: (6, 2, 2), 4: (8, 4, 2), 8: (12, 8, 2)}


def projection_params(scale: int) -> tuple[int, int, int]:
    try:
        return PROJECTION_PARAMS[int(scale)]
    except KeyError:
        raise ConfigError(f"no projection parameters for scale {scale}") from None


class ChannelAttention(nn.Module):
    """Channel gate from average- and max-pooled descriptors through a shared MLP."""

    def __init__(self, channels: int, reduction: int = 4):
        super().__init__()
        if channels < reduction:
            raise ConfigError(
                f"channel attention needs channels >= reduction, got {channels} < {reduction}"
            )
        hidden = max(1, channels // reduction)
        self.mlp = nn.Sequential(
            nn.Conv2d(channels, hidden, 1),
            nn.ReLU(inplace=True),
            nn.Conv2d(hidden, channels, 1),
        )

    def forward(self, x):
        gate = self.mlp(F.adaptive_avg_pool2d(x, 1)) + self.mlp(F.adaptive_max_pool2d(x, 1))
        return x * torch.sigmoid(gate)


class ResidualChannelBlock(nn.Module):
    """conv-relu-conv body with channel attention and an identity skip."""

    def __init__(self, channels: int, reduction: int = 4):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(channels, channels, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels, channels, 3, padding=1),
            ChannelAttention(channels, reduction),
        )

    def forward(self, x):
        return x + self.body(x)


class ResidualGroup(nn.Module):
    """A stack of attention blocks closed by a conv, wrapped in a group skip.

    Zeroing the trailing conv turns the whole group into an identity map,
    which the wiring tests exploit.
    """

    def __init__(self, channels: int, blocks: int = 4, reduction: int = 4):
        super().__init__()
        self.body = nn.Sequential(
            *[ResidualChannelBlock(channels, reduction) for _ in range(blocks)],
            nn.Conv2d(channels, channels, 3, padding=1),
        )

    def forward(self, x):
        return x + self.body(x)


class UpProjection(nn.Module):
    """Error-feedback upsampling unit: deconv, re-project down, correct, sum.

    Pure algebra (no activations inside), so the unit is linear in its input
    and easy to reason about in the gradient tests.
    """

    def __init__(self, channels: int, scale: int):
        super().__init__()
        k, s, p = projection_params(scale)
        self.up0 = nn.ConvTranspose2d(channels, channels, k, stride=s, padding=p)
        self.down0 = nn.Conv2d(channels, channels, k, stride=s, padding=p)
        self.up1 = nn.ConvTranspose2d(channels, channels, k, stride=s, padding=p)

    def forward(self, x):
        high0 = self.up0(x)
        low0 = self.down0(high0)
        return high0 + self.up1(low0 - x)


class DownProjection(nn.Module):
    """Dual of :class:`UpProjection` with a leading 1x1 to set the output width."""

    def __init__(self, in_channels: int, out_channels: int, scale: int):
        super().__init__()
        k, s, p = projection_params(scale)
        self.scale = int(scale)
        self.shrink = nn.Conv2d(in_channels, out_channels, 1)
        self.down0 = nn.Conv2d(out_channels, out_channels, k, stride=s, padding=p)
        self.up0 = nn.ConvTranspose2d(out_channels, out_channels, k, stride=s, padding=p)
        self.down1 = nn.Conv2d(out_channels, out_channels, k, stride=s, padding=p)

    def forward(self, x):
        if x.shape[-2] % self.scale or x.shape[-1] % self.scale:
            raise ValueError(
                f"spatial size {tuple(x.shape[-2:])} is not divisible by scale {self.scale}"
            )
        x = self.shrink(x)
        low0 = self.down0(x)
        high0 = self.up0(low0)
        return low0 + self.down1(high0 - x)


class PyramidPooling(nn.Module):
    """Concatenated adaptive average pools over a pyramid of bin sizes."""

    def __init__(self, bins: tuple[int, ...] = (1, 2, 3, 6)):
        super().__init__()
        self.bins = tuple(int(b) for b in bins)

    def out_features(self, channels: int) -> int:
        return channels * sum(b * b for b in self.bins)

    def forward(self, x):
        b = x.shape[0]
        largest = max(self.bins)
        if x.shape[-2] < largest or x.shape[-1] < largest:
            raise ValueError(
                f"pyramid pooling needs at least {largest}x{largest} input, "
                f"got {tuple(x.shape[-2:])}"
            )
        parts = [F.adaptive_avg_pool2d(x, size).reshape(b, -1) for size in self.bins]
        return torch.cat(parts, dim=1)


def pooled_descriptor(x: torch.Tensor, mode: str, ppm: PyramidPooling | None = None) -> torch.Tensor:
    """Flatten a feature map to a per-sample vector by the configured pooling."""
    b = x.shape[0]
    if mode == "ppm":
        if ppm is None:
            raise ConfigError("ppm pooling requested without a PyramidPooling module")
        return ppm(x)
    if mode == "avg":
        return F.adaptive_avg_pool2d(x, 1).reshape(b, -1)
    if mode == "max":
        return F.adaptive_max_pool2d(x, 1).reshape(b, -1)
    if mode == "avgmax":
        return torch.cat(
            [F.adaptive_avg_pool2d(x, 1).reshape(b, -1), F.adaptive_max_pool2d(x, 1).reshape(b, -1)],
            dim=1,
        )
    raise ConfigError(f"unknown pooling mode {mode!r}")


class DynamicMLP(nn.Module):
    """MLP on one descriptor whose inner weights are generated from another.

    Three couplings:
      A: full d*d weight per layer, generated from the conditioning vector;
      B: generated weight acts in a d/2 bottleneck between fixed projections;
      C: like B, but the conditioning vector is itself refined each layer.
    """

    def __init__(self, in_x: int, in_y: int, out_features: int, hidden: int = 64,
                 layers: int = 1, version: str = "A"):
        super().__init__()
        if version not in ("A", "B", "C"):
            raise ConfigError(f"unknown coupling version {version!r}")
        if version in ("B", "C") and hidden % 2:
            raise ConfigError("versions B and C need an even hidden width")
        self.version = version
        self.hidden = hidden
        self.proj_x = nn.Linear(in_x, hidden)
        self.proj_y = nn.Linear(in_y, hidden)
        inner = hidden if version == "A" else hidden // 2
        self.inner = inner
        self.generators = nn.ModuleList(
            nn.Linear(hidden, inner * inner) for _ in range(layers)
        )
        if version == "A":
            self.downs = self.ups = self.refines = None
        else:
            self.downs = nn.ModuleList(nn.Linear(hidden, inner) for _ in range(layers))
            self.ups = nn.ModuleList(nn.Linear(inner, hidden) for _ in range(layers))
            self.refines = (
                nn.ModuleList(nn.Linear(hidden, hidden) for _ in range(layers))
                if version == "C" else None
            )
        self.head = nn.Linear(hidden, out_features)

    def forward(self, fx, fy):
        fx = self.proj_x(fx)
        fy = self.proj_y(fy)
        b = fx.shape[0]
        for i, gen in enumerate(self.generators):
            if self.refines is not None:
                fy = F.relu(self.refines[i](fy))
            weight = gen(fy).reshape(b, self.inner, self.inner)
            if self.version == "A":
                fx = F.relu(torch.bmm(weight, fx.unsqueeze(-1)).squeeze(-1))
            else:
                mid = torch.bmm(weight, self.downs[i](fx).unsqueeze(-1)).squeeze(-1)
                fx = self.ups[i](F.relu(mid))
        return self.head(fx)
