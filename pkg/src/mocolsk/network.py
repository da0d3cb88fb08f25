"""Full model assembly, initialization, and checkpoint files.

The network keeps the temperature branch at low resolution and the guidance
branch at high resolution; each stage runs two residual groups on both
branches and then a fusion module, with temperature feature width growing
by ``base_dim`` per stage.  A reconstruction tail lifts the final feature
to high resolution and its head output is added to a bicubic upsample of
the input, so the convolutional path only ever learns a correction field.

Checkpoints are two files: ``index.json`` (parameter table, config,
normalization snapshot, step, blob hash) and ``params.f32`` (flat
little-endian float32).
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .blocks import ResidualGroup, UpProjection
from .config import NetworkConfig
from .data import bicubic_upsample
from .errors import ConfigError, NonFiniteError
from .fusion import MoCoLSKModule

CHECKPOINT_INDEX = "index.json"
CHECKPOINT_BLOB = "params.f32"
GROUPS_PER_STAGE = 2


class MoCoLSKNet(nn.Module):
    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        self.cfg = cfg
        base = cfg.base_dim
        stage_dims = cfg.stage_dims()
        fusion_dims = cfg.fusion_out_dims()

        self.lst_stem = nn.Conv2d(1, base, 3, padding=1)
        self.guid_stem = nn.Conv2d(cfg.guidance_channels, base, 3, padding=1)

        def groups(channels):
            return nn.Sequential(*[
                ResidualGroup(channels, cfg.blocks_per_group, cfg.attention_reduction)
                for _ in range(GROUPS_PER_STAGE)
            ])

        self.lst_stages = nn.ModuleList(groups(d) for d in stage_dims)
        self.guid_stages = nn.ModuleList(groups(base) for _ in range(cfg.stages))
        self.fusions = nn.ModuleList(
            MoCoLSKModule(
                stage_dims[l], base, fusion_dims[l], cfg.scale,
                variant=cfg.variant_sequence[l],
                kernel_spec=cfg.kernel_spec,
                dconv_kernel=cfg.dconv_kernel,
                dmlp_version=cfg.dmlp_version,
                dmlp_layers=cfg.dmlp_layers,
                dmlp_hidden=cfg.dmlp_hidden,
                mcwg_pooling=cfg.mcwg_pooling,
                dynamic_conv=cfg.dynamic_conv,
                fuse_guidance=cfg.fuse_guidance,
                attention_reduction=cfg.attention_reduction,
            )
            for l in range(cfg.stages)
        )
        recon_dim = fusion_dims[-1]
        self.recon = nn.Sequential(*[
            ResidualGroup(recon_dim, cfg.blocks_per_group, cfg.attention_reduction)
            for _ in range(cfg.recon_groups)
        ])
        self.recon_up = UpProjection(recon_dim, cfg.scale)
        self.head = nn.Sequential(
            nn.Conv2d(recon_dim, recon_dim, 3, padding=1),
            nn.LeakyReLU(cfg.negative_slope),
            nn.Conv2d(recon_dim, 1, 3, padding=1),
        )

    def _check_finite(self, x: torch.Tensor, where: str):
        if not torch.isfinite(x).all():
            raise NonFiniteError(f"non-finite activation after {where}")

    def forward(self, lst_lr: torch.Tensor, guid_hr: torch.Tensor) -> torch.Tensor:
        s = self.cfg.scale
        if lst_lr.dim() != 4 or lst_lr.shape[1] != 1:
            raise ValueError(f"lst_lr must be (B,1,h,w), got {tuple(lst_lr.shape)}")
        if guid_hr.dim() != 4 or guid_hr.shape[1] != self.cfg.guidance_channels:
            raise ValueError(
                f"guid_hr must be (B,{self.cfg.guidance_channels},H,W), got {tuple(guid_hr.shape)}"
            )
        if guid_hr.shape[-2:] != (lst_lr.shape[-2] * s, lst_lr.shape[-1] * s):
            raise ValueError(
                f"guidance size {tuple(guid_hr.shape[-2:])} does not match "
                f"lst {tuple(lst_lr.shape[-2:])} at scale {s}"
            )
        t = self.lst_stem(lst_lr)
        g = self.guid_stem(guid_hr)
        for l in range(self.cfg.stages):
            g = self.guid_stages[l](g)
            t = self.lst_stages[l](t)
            t = self.fusions[l](t, g)
            self._check_finite(t, f"stage {l + 1}")
        r = self.head(self.recon_up(self.recon(t)))
        out = r + bicubic_upsample(lst_lr, s)
        self._check_finite(out, "output")
        return out


def _init_module(m: nn.Module):
    # Kaiming-uniform over the effective fan-in, bound 1/sqrt(fan).  Transposed
    # convs use their true per-output fan (in * k^2 / s^2); torch's own fan
    # arithmetic over-scales them, which compounds through the activation-free
    # projection stacks and blows the forward pass up by orders of magnitude.
    if isinstance(m, (nn.Conv2d, nn.Linear)):
        nn.init.kaiming_uniform_(m.weight, a=math.sqrt(5.0))
        if m.bias is not None:
            nn.init.zeros_(m.bias)
    elif isinstance(m, nn.ConvTranspose2d):
        k, s = m.kernel_size[0], m.stride[0]
        fan = m.in_channels * k * k / (s * s)
        bound = 1.0 / math.sqrt(fan)
        nn.init.uniform_(m.weight, -bound, bound)
        if m.bias is not None:
            nn.init.zeros_(m.bias)


def build_network(cfg: NetworkConfig, seed: int) -> MoCoLSKNet:
    """Construct and deterministically initialize the model from a seed."""
    torch.manual_seed(int(seed))
    net = MoCoLSKNet(cfg)
    net.apply(_init_module)
    return net


def zero_projection_head(net: MoCoLSKNet) -> None:
    """Zero the final head conv; the output then equals the bicubic baseline."""
    final = net.head[-1]
    with torch.no_grad():
        final.weight.zero_()
        final.bias.zero_()


def set_zero_modality_weights(net: MoCoLSKNet, enabled: bool) -> None:
    """Force every fusion stage's generated selection weights to zero."""
    for fusion in net.fusions:
        fusion.zero_modality_weights = bool(enabled)


# ---------------------------------------------------------------------------
# checkpoints

def _config_dict(cfg: NetworkConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["kernel_spec"] = [list(e) for e in d["kernel_spec"]]
    d["variant_sequence"] = list(d["variant_sequence"])
    return d


def network_config_from_dict(raw: dict) -> NetworkConfig:
    names = {f.name for f in dataclasses.fields(NetworkConfig)}
    unknown = set(raw) - names
    if unknown:
        raise ConfigError(f"unknown network config key(s): {sorted(unknown)}")
    raw = dict(raw)
    if "kernel_spec" in raw:
        raw["kernel_spec"] = tuple(tuple(e) for e in raw["kernel_spec"])
    if raw.get("variant_sequence") is not None:
        raw["variant_sequence"] = tuple(raw["variant_sequence"])
    return NetworkConfig(**raw)


def save_checkpoint(
    net: MoCoLSKNet,
    path: str | Path,
    step: int,
    normalization: dict,
) -> None:
    """Write ``index.json`` + ``params.f32`` under ``path`` (a directory)."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    entries = {}
    chunks = []
    offset = 0
    for name, tensor in net.state_dict().items():
        arr = tensor.detach().cpu().numpy().astype("<f4")
        if not np.isfinite(arr).all():
            raise NonFiniteError(f"parameter {name} is non-finite at save time")
        raw = arr.tobytes()
        entries[name] = {"shape": list(arr.shape), "offset": offset, "nbytes": len(raw)}
        chunks.append(raw)
        offset += len(raw)
    blob = b"".join(chunks)
    index = {
        "format_version": 1,
        "step": int(step),
        "config": _config_dict(net.cfg),
        "normalization": normalization,
        "params": entries,
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
    }
    (root / CHECKPOINT_BLOB).write_bytes(blob)
    (root / CHECKPOINT_INDEX).write_text(
        json.dumps(index, indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_checkpoint(
    path: str | Path,
    expect_cfg: NetworkConfig | None = None,
) -> tuple[MoCoLSKNet, int, dict]:
    """Rebuild the network from a checkpoint directory.

    Returns (net, step, normalization snapshot).  If ``expect_cfg`` is given
    it must match the stored config exactly.
    """
    root = Path(path)
    index_path = root / CHECKPOINT_INDEX
    if not index_path.is_file():
        raise ConfigError(f"{root} has no {CHECKPOINT_INDEX}")
    index = json.loads(index_path.read_text(encoding="utf-8"))
    cfg = network_config_from_dict(index["config"])
    if expect_cfg is not None and _config_dict(cfg) != _config_dict(expect_cfg):
        raise ConfigError("checkpoint config does not match the requested config")
    blob = (root / CHECKPOINT_BLOB).read_bytes()
    total = sum(e["nbytes"] for e in index["params"].values())
    if len(blob) != total:
        raise ConfigError(f"checkpoint blob is {len(blob)} bytes, index expects {total}")
    if hashlib.sha256(blob).hexdigest() != index["blob_sha256"]:
        raise ConfigError("checkpoint blob does not match its recorded hash")
    net = build_network(cfg, seed=0)
    state = {}
    for name, entry in index["params"].items():
        start, n = entry["offset"], entry["nbytes"]
        arr = np.frombuffer(blob[start:start + n], dtype="<f4").reshape(entry["shape"])
        state[name] = torch.from_numpy(arr.copy())
    missing = set(net.state_dict()) ^ set(state)
    if missing:
        raise ConfigError(f"checkpoint parameter names do not match the config: {sorted(missing)}")
    net.load_state_dict(state)
    return net, int(index["step"]), index["normalization"]
