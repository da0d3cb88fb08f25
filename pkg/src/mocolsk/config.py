"""Dataclass configs for the network, optimizer, losses, and run files.

A run file is a YAML document with four nested sections (``network``,
``optim``, ``loss`` and top-level run keys).  Parsing is strict: unknown
keys anywhere in the document raise :class:`ConfigError` before any work
starts, and every parsed config re-serializes to a resolved snapshot.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import yaml

from .errors import ConfigError

VALID_SCALES = (2, 4, 8)

# Fusion-module variants selectable per stage.  Short tags "S"/"C" are the
# spatial- and channel-selection forms; the rest are the comparison wirings.
VARIANT_ALIASES = {
    "s": "mocolsk-ss",
    "ss": "mocolsk-ss",
    "mocolsk-ss": "mocolsk-ss",
    "mocolsk": "mocolsk-ss",
    "c": "mocolsk-cs",
    "cs": "mocolsk-cs",
    "mocolsk-cs": "mocolsk-cs",
    "baseline": "baseline",
    "sk-m": "sk-m",
    "lsk-m": "lsk-m",
    "lsk-cs-m": "lsk-cs-m",
    "ex": "mocolsk-ex",
    "mocolsk-ex": "mocolsk-ex",
}
VARIANTS = ("mocolsk-ss", "mocolsk-cs", "baseline", "sk-m", "lsk-m", "lsk-cs-m", "mocolsk-ex")

POOLING_MODES = ("ppm", "avg", "max", "avgmax")
NORMALIZATION_STRATEGIES = ("none", "zscore", "minmax")
DMLP_VERSIONS = ("A", "B", "C")
LOSS_KINDS = ("l1", "ssim", "ms-ssim")


def canonical_variant(tag: str) -> str:
    key = str(tag).strip().lower()
    if key not in VARIANT_ALIASES:
        raise ConfigError(f"unknown fusion variant {tag!r}; valid: {sorted(set(VARIANT_ALIASES))}")
    return VARIANT_ALIASES[key]


def validate_kernel_spec(spec: Sequence[Sequence[int]]) -> tuple[tuple[int, int], ...]:
    """Normalize a kernel sequence to ((k, d), ...) and check its invariants."""
    out = []
    for entry in spec:
        if len(entry) != 2:
            raise ConfigError(f"kernel spec entries must be (kernel, dilation) pairs, got {entry!r}")
        k, d = int(entry[0]), int(entry[1])
        if k < 1 or k % 2 == 0:
            raise ConfigError(f"kernel sizes must be odd and positive, got {k}")
        if d < 1:
            raise ConfigError(f"dilations must be >= 1, got {d}")
        out.append((k, d))
    if not out:
        raise ConfigError("kernel spec must not be empty")
    if len(out) > 2:
        raise ConfigError("kernel specs with more than two entries are not supported")
    return tuple(out)


@dataclass
class NetworkConfig:
    scale: int = 8
    stages: int = 4
    base_dim: int = 32
    blocks_per_group: int = 4
    attention_reduction: int = 4
    guidance_channels: int = 10
    kernel_spec: tuple[tuple[int, int], ...] = ((5, 1), (7, 3))
    dconv_kernel: int = 3
    dmlp_version: str = "A"
    dmlp_layers: int = 1
    dmlp_hidden: int = 64
    variant_sequence: tuple[str, ...] | None = None
    recon_groups: int = 2
    negative_slope: float = 0.2
    mcwg_pooling: str = "ppm"
    dynamic_conv: bool = True
    fuse_guidance: bool = True

    def __post_init__(self):
        if self.scale not in VALID_SCALES:
            raise ConfigError(f"scale must be one of {VALID_SCALES}, got {self.scale}")
        if self.stages < 1:
            raise ConfigError("stages must be >= 1")
        if self.base_dim < self.attention_reduction:
            raise ConfigError("base_dim must be >= attention_reduction")
        if self.base_dim % self.attention_reduction != 0:
            raise ConfigError("base_dim must be divisible by attention_reduction")
        if self.dconv_kernel % 2 == 0 or self.dconv_kernel < 1:
            raise ConfigError("dconv_kernel must be odd")
        if self.dmlp_version not in DMLP_VERSIONS:
            raise ConfigError(f"dmlp_version must be one of {DMLP_VERSIONS}")
        if self.dmlp_layers < 1:
            raise ConfigError("dmlp_layers must be >= 1")
        if self.mcwg_pooling not in POOLING_MODES:
            raise ConfigError(f"mcwg_pooling must be one of {POOLING_MODES}")
        self.kernel_spec = validate_kernel_spec(self.kernel_spec)
        if self.variant_sequence is None:
            self.variant_sequence = tuple("mocolsk-ss" for _ in range(self.stages))
        else:
            self.variant_sequence = tuple(canonical_variant(v) for v in self.variant_sequence)
        if len(self.variant_sequence) != self.stages:
            raise ConfigError(
                f"variant_sequence has {len(self.variant_sequence)} entries for {self.stages} stages"
            )

    def stage_dims(self) -> list[int]:
        """Feature width of the target branch's residual groups at each stage."""
        return [self.base_dim * (l + 1) for l in range(self.stages)]

    def fusion_out_dims(self) -> list[int]:
        """Output width of the fusion module at each stage (capped at the final width)."""
        return [self.base_dim * min(l + 2, self.stages) for l in range(self.stages)]


@dataclass
class OptimSpec:
    lr: float = 1e-4
    weight_decay: float = 1e-5
    iterations: int = 500
    batch_size: int = 4
    t0: int | None = None        # first cosine cycle length; defaults to iterations // 4
    t_mult: int = 2
    lr_min: float = 1e-6

    def __post_init__(self):
        if self.lr < 0:
            raise ConfigError("lr must be >= 0")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.t0 is None:
            self.t0 = max(1, self.iterations // 4)
        if self.t0 < 1 or self.t_mult < 1:
            raise ConfigError("t0 and t_mult must be >= 1")


@dataclass
class LossSpec:
    terms: tuple[tuple[str, float], ...] = (("l1", 1.0),)
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 1.0
    ms_scales: int = 5

    def __post_init__(self):
        norm_terms = []
        for entry in self.terms:
            if len(entry) != 2:
                raise ConfigError(f"loss terms must be (kind, weight) pairs, got {entry!r}")
            kind, weight = str(entry[0]).lower(), float(entry[1])
            if kind not in LOSS_KINDS:
                raise ConfigError(f"loss kind must be one of {LOSS_KINDS}, got {kind!r}")
            if weight < 0:
                raise ConfigError("loss weights must be >= 0")
            norm_terms.append((kind, weight))
        if not norm_terms or sum(w for _, w in norm_terms) <= 0:
            raise ConfigError("loss weights must sum to a positive value")
        self.terms = tuple(norm_terms)
        if self.window % 2 == 0 or self.window < 3:
            raise ConfigError("ssim window must be odd and >= 3")
        if self.data_range <= 0:
            raise ConfigError("data_range must be > 0")
        if self.ms_scales < 1:
            raise ConfigError("ms_scales must be >= 1")

    def with_data_range(self, data_range: float) -> "LossSpec":
        return dataclasses.replace(self, data_range=float(data_range))


@dataclass
class RunConfig:
    network: NetworkConfig = field(default_factory=NetworkConfig)
    optim: OptimSpec = field(default_factory=OptimSpec)
    loss: LossSpec = field(default_factory=LossSpec)
    data: str = ""
    output_dir: str = ""
    seed: int = 0
    normalization: str = "zscore"
    val_every: int = 100

    def __post_init__(self):
        if self.normalization not in NORMALIZATION_STRATEGIES:
            raise ConfigError(
                f"normalization must be one of {NORMALIZATION_STRATEGIES}, got {self.normalization!r}"
            )
        if self.val_every < 1:
            raise ConfigError("val_every must be >= 1")


def _build(cls, raw: dict, where: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} section must be a mapping, got {type(raw).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - names
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"invalid {where} section: {exc}") from exc


def run_config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("run config must be a mapping at the top level")
    doc = dict(doc)
    sections = {}
    for name, cls in (("network", NetworkConfig), ("optim", OptimSpec), ("loss", LossSpec)):
        raw = doc.pop(name, None)
        if raw is not None:
            raw = dict(raw)
            if name == "loss" and "terms" in raw:
                raw["terms"] = tuple(tuple(t) for t in raw["terms"])
            if name == "network" and "kernel_spec" in raw:
                raw["kernel_spec"] = tuple(tuple(e) for e in raw["kernel_spec"])
            if name == "network" and raw.get("variant_sequence") is not None:
                raw["variant_sequence"] = tuple(raw["variant_sequence"])
            sections[name] = _build(cls, raw, name)
    top_names = {f.name for f in dataclasses.fields(RunConfig)} - {"network", "optim", "loss"}
    unknown = set(doc) - top_names
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {sorted(unknown)}")
    return RunConfig(**sections, **doc)


def load_run_config(path: str | Path) -> RunConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"could not parse {path}: {exc}") from exc
    return run_config_from_dict(doc if doc is not None else {})


def _plain(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, tuple):
        return [_plain(v) for v in obj]
    if isinstance(obj, list):
        return [_plain(v) for v in obj]
    return obj


def run_config_to_dict(cfg: RunConfig) -> dict:
    return _plain(cfg)


def save_resolved_config(cfg: RunConfig, path: str | Path) -> None:
    """Write the fully-resolved config snapshot a run can be replayed from."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(
        yaml.safe_dump(run_config_to_dict(cfg), sort_keys=True), encoding="utf-8"
    )
