"""Guided fusion stage: selective large-kernel gating conditioned on modality.

One fusion module per network stage.  It lifts the low-resolution
temperature feature to guidance resolution, derives competing spatial
contexts via a decomposed large-kernel pathway, selects between them with
per-sample convolution weights generated from pooled descriptors of both
modalities, gates the guidance feature with the result, and projects the
concatenation back down to low resolution.

The comparison wirings from the ablation study (plain selective-kernel,
static large-kernel with spatial or channel selection, exchanged-role and
temperature-only forms) live here too, selectable per stage.
"""
from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .blocks import (
    DownProjection,
    DynamicMLP,
    PyramidPooling,
    UpProjection,
    pooled_descriptor,
)
from .errors import ConfigError


def receptive_field(kernel_spec) -> int:
    """Receptive field of a sequential dilated depthwise stack."""
    spec = tuple(kernel_spec)
    if not spec:
        raise ConfigError("kernel spec is empty")
    return 1 + sum((k - 1) * d for k, d in spec)


def _dw(channels: int, kernel: int, dilation: int) -> nn.Conv2d:
    if kernel % 2 == 0:
        raise ConfigError(f"kernel size must be odd for same-size padding, got {kernel}")
    pad = dilation * (kernel - 1) // 2
    return nn.Conv2d(channels, channels, kernel, padding=pad, dilation=dilation, groups=channels)


class LargeKernelBranches(nn.Module):
    """Two context branches from a (possibly sequential) large-kernel stack.

    With two kernel entries the second depthwise conv runs on top of the
    first, so the branches see nested receptive fields.  With one entry both
    pointwise branches share the single context (the no-decomposition form).
    """

    def __init__(self, in_channels: int, branch_channels: int, kernel_spec):
        super().__init__()
        if not 1 <= len(kernel_spec) <= 2:
            raise ConfigError("kernel spec must hold one or two entries")
        self.kernel_spec = tuple(kernel_spec)
        k1, d1 = kernel_spec[0]
        self.dw1 = _dw(in_channels, k1, d1)
        self.dw2 = _dw(in_channels, *kernel_spec[1]) if len(kernel_spec) == 2 else None
        self.pw1 = nn.Conv2d(in_channels, branch_channels, 1)
        self.pw2 = nn.Conv2d(in_channels, branch_channels, 1)

    def forward(self, x):
        ctx1 = self.dw1(x)
        ctx2 = self.dw2(ctx1) if self.dw2 is not None else ctx1
        return self.pw1(ctx1), self.pw2(ctx2)


def spatial_descriptor(u1: torch.Tensor, u2: torch.Tensor) -> torch.Tensor:
    """Channel-mean and channel-max of the stacked branches: (B, 2, H, W)."""
    both = torch.cat([u1, u2], dim=1)
    return torch.cat(
        [both.mean(dim=1, keepdim=True), both.max(dim=1, keepdim=True).values], dim=1
    )


def per_sample_conv(x: torch.Tensor, weight: torch.Tensor) -> torch.Tensor:
    """Convolve each sample with its own kernel via the grouped-conv trick.

    x: (B, Cin, H, W); weight: (B, Cout, Cin, k, k); same-size padding, no bias.
    """
    b, cin, h, w = x.shape
    if weight.shape[0] != b or weight.shape[2] != cin:
        raise ValueError(f"weight shape {tuple(weight.shape)} does not match input {tuple(x.shape)}")
    cout, k = weight.shape[1], weight.shape[-1]
    if k % 2 == 0:
        raise ValueError(f"kernel size must be odd for same-size padding, got {k}")
    out = F.conv2d(
        x.reshape(1, b * cin, h, w),
        weight.reshape(b * cout, cin, k, k),
        padding=(k - 1) // 2,
        groups=b,
    )
    return out.reshape(b, cout, h, w)


def _descriptor_features(channels: int, mode: str, ppm: PyramidPooling) -> int:
    if mode == "ppm":
        return ppm.out_features(channels)
    if mode in ("avg", "max"):
        return channels
    if mode == "avgmax":
        return 2 * channels
    raise ConfigError(f"unknown pooling mode {mode!r}")


class ModalityWeightGenerator(nn.Module):
    """Generates per-sample 2-in/2-out selection-conv weights from both modalities.

    The temperature descriptor is transformed by an MLP whose inner weights
    are produced from the guidance descriptor, so the selection kernels are
    a genuine function of the guidance content.
    """

    def __init__(self, lst_channels: int, guid_channels: int, kernel: int, *,
                 pooling: str = "ppm", version: str = "A", layers: int = 1, hidden: int = 64):
        super().__init__()
        self.kernel = kernel
        self.pooling = pooling
        self.ppm = PyramidPooling()
        self.mlp = DynamicMLP(
            _descriptor_features(lst_channels, pooling, self.ppm),
            _descriptor_features(guid_channels, pooling, self.ppm),
            2 * 2 * kernel * kernel,
            hidden=hidden, layers=layers, version=version,
        )

    def forward(self, x, y):
        fx = pooled_descriptor(x, self.pooling, self.ppm)
        fy = pooled_descriptor(y, self.pooling, self.ppm)
        return self.mlp(fx, fy).reshape(-1, 2, 2, self.kernel, self.kernel)


class MoCoLSKModule(nn.Module):
    """One fusion stage; ``variant`` picks the wiring.

    Inputs: temperature feature (B, C, h, w) at low resolution, guidance
    feature (B, G, H, W) at high resolution.  Output lives at low resolution
    with ``out_channels`` channels for every variant.
    """

    def __init__(self, lst_channels: int, guid_channels: int, out_channels: int, scale: int, *,
                 variant: str = "mocolsk-ss",
                 kernel_spec=((5, 1), (7, 3)),
                 dconv_kernel: int = 3,
                 dmlp_version: str = "A",
                 dmlp_layers: int = 1,
                 dmlp_hidden: int = 64,
                 mcwg_pooling: str = "ppm",
                 dynamic_conv: bool = True,
                 fuse_guidance: bool = True,
                 attention_reduction: int = 4):
        super().__init__()
        self.variant = variant
        self.fuse_guidance = fuse_guidance
        self.dynamic_conv = dynamic_conv
        self.zero_modality_weights = False
        c, g = lst_channels, guid_channels
        self.up = UpProjection(c, scale)

        if variant == "baseline":
            self.down = DownProjection(c, out_channels, scale)
            return

        if variant in ("sk-m", "lsk-m", "lsk-cs-m"):
            self._build_static_comparison(c + g, attention_reduction, kernel_spec)
            self.down = DownProjection(c + g, out_channels, scale)
            return

        # Modality-conditioned wirings.  The selection pathway runs on the
        # temperature feature (default) or the guidance feature (exchanged).
        source_channels = g if variant == "mocolsk-ex" else c
        gated_channels = g if (fuse_guidance and variant != "mocolsk-ex") else c
        self.branches = LargeKernelBranches(source_channels, g, kernel_spec)
        self.merge = nn.Conv2d(g, gated_channels, 1)
        if dynamic_conv:
            self.mcwg = ModalityWeightGenerator(
                c, g, dconv_kernel,
                pooling=mcwg_pooling, version=dmlp_version,
                layers=dmlp_layers, hidden=dmlp_hidden,
            )
        else:
            self.mcwg = None
        if variant == "mocolsk-cs":
            hidden = max(4, 2 * g // attention_reduction)
            self.weight_adapter = (
                nn.Linear(2 * 2 * dconv_kernel * dconv_kernel, 2 * g) if dynamic_conv else None
            )
            self.squeeze = nn.Linear(2 * g, hidden)
            self.gate1 = nn.Linear(hidden, g)
            self.gate2 = nn.Linear(hidden, g)
        else:
            if not dynamic_conv:
                pad = (dconv_kernel - 1) // 2
                self.static_select = nn.Conv2d(2, 2, dconv_kernel, padding=pad)
        self.down = DownProjection(c + gated_channels, out_channels, scale)

    def _build_static_comparison(self, n: int, reduction: int, kernel_spec):
        half = max(1, n // 2)
        self._half = half
        if self.variant == "sk-m":
            self.branch_a = nn.Conv2d(n, n, 3, padding=1)
            self.branch_b = nn.Conv2d(n, n, 3, padding=2, dilation=2)
            hidden = max(4, n // reduction)
            self.squeeze = nn.Linear(n, hidden)
            self.select_a = nn.Linear(hidden, n)
            self.select_b = nn.Linear(hidden, n)
        else:
            self.lsk = LargeKernelBranches(n, half, kernel_spec)
            if self.variant == "lsk-m":
                self.select = nn.Conv2d(2, 2, 7, padding=3)
            else:
                hidden = max(4, 2 * half // reduction)
                self.squeeze = nn.Linear(2 * half, hidden)
                self.gate1 = nn.Linear(hidden, half)
                self.gate2 = nn.Linear(hidden, half)
            self.expand = nn.Conv2d(half, n, 1)

    def _static_comparison(self, w: torch.Tensor) -> torch.Tensor:
        if self.variant == "sk-m":
            u1, u2 = self.branch_a(w), self.branch_b(w)
            z = F.relu(self.squeeze(F.adaptive_avg_pool2d(u1 + u2, 1).flatten(1)))
            logits = torch.stack([self.select_a(z), self.select_b(z)], dim=1)
            sel = torch.softmax(logits, dim=1)[..., None, None]
            return sel[:, 0] * u1 + sel[:, 1] * u2
        u1, u2 = self.lsk(w)
        if self.variant == "lsk-m":
            sig = torch.sigmoid(self.select(spatial_descriptor(u1, u2)))
            attn = u1 * sig[:, 0:1] + u2 * sig[:, 1:2]
        else:
            d = torch.cat(
                [F.adaptive_avg_pool2d(u1, 1).flatten(1), F.adaptive_avg_pool2d(u2, 1).flatten(1)],
                dim=1,
            )
            z = F.relu(self.squeeze(d))
            g1 = torch.sigmoid(self.gate1(z))[..., None, None]
            g2 = torch.sigmoid(self.gate2(z))[..., None, None]
            attn = g1 * u1 + g2 * u2
        return w * self.expand(attn)

    def _modality_weights(self, x, y):
        w = self.mcwg(x, y)
        if self.zero_modality_weights:
            w = w * 0.0
        return w

    def forward(self, t_feat: torch.Tensor, guid_feat: torch.Tensor) -> torch.Tensor:
        x = self.up(t_feat)
        if self.variant == "baseline":
            return self.down(x)
        if self.variant in ("sk-m", "lsk-m", "lsk-cs-m"):
            return self.down(self._static_comparison(torch.cat([x, guid_feat], dim=1)))

        source = guid_feat if self.variant == "mocolsk-ex" else x
        u1, u2 = self.branches(source)
        if self.variant == "mocolsk-cs":
            d = torch.cat(
                [F.adaptive_avg_pool2d(u1, 1).flatten(1), F.adaptive_avg_pool2d(u2, 1).flatten(1)],
                dim=1,
            )
            if self.mcwg is not None and self.weight_adapter is not None:
                d = d + self.weight_adapter(self._modality_weights(x, guid_feat).flatten(1))
            z = F.relu(self.squeeze(d))
            g1 = torch.sigmoid(self.gate1(z))[..., None, None]
            g2 = torch.sigmoid(self.gate2(z))[..., None, None]
            selected = g1 * u1 + g2 * u2
        else:
            sa = spatial_descriptor(u1, u2)
            if self.mcwg is not None:
                masks = torch.sigmoid(per_sample_conv(sa, self._modality_weights(x, guid_feat)))
            else:
                masks = torch.sigmoid(self.static_select(sa))
            selected = masks[:, 0:1] * u1 + masks[:, 1:2] * u2
        s = self.merge(selected)
        if self.fuse_guidance and self.variant != "mocolsk-ex":
            z = guid_feat * s
        else:
            z = x * s
        return self.down(torch.cat([x, z], dim=1))
