"""Synthetic raster pipeline: scene synthesis, degradation, storage, normalization.

Low-resolution inputs are always derived from high-resolution fields by
block-mean degradation, so every sample carries its own ground truth.
Datasets are directories: a ``manifest.json`` plus one subdirectory per
sample holding raw little-endian float32 blobs (row-major, channel first,
no header).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from scipy.ndimage import gaussian_filter

from .determinism import seeded_generator
from .errors import ConfigError, DegenerateInputError, NonFiniteError

MANIFEST_NAME = "manifest.json"
FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# resampling

def wald_degrade(hr, scale: int):
    """Block-mean downsampling by an integer factor over the trailing two axes."""
    scale = int(scale)
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    h, w = hr.shape[-2], hr.shape[-1]
    if h % scale or w % scale:
        raise ValueError(f"spatial size {h}x{w} is not divisible by scale {scale}")
    shape = hr.shape[:-2] + (h // scale, scale, w // scale, scale)
    blocks = hr.reshape(shape)
    if isinstance(hr, torch.Tensor):
        return blocks.mean(dim=(-3, -1))
    return np.asarray(blocks).mean(axis=(-3, -1))


def _keys_kernel(x: torch.Tensor) -> torch.Tensor:
    # Cubic convolution kernel with a = -1/2 (the interpolating choice).
    ax = x.abs()
    near = (1.5 * ax - 2.5) * ax * ax + 1.0
    far = ((-0.5 * ax + 2.5) * ax - 4.0) * ax + 2.0
    return torch.where(ax <= 1.0, near, torch.where(ax < 2.0, far, torch.zeros_like(ax)))


def _interp_axis(x: torch.Tensor, scale: int, dim: int) -> torch.Tensor:
    n = x.shape[dim]
    dst = torch.arange(n * scale, dtype=torch.float64, device=x.device)
    src = (dst + 0.5) / scale - 0.5
    base = torch.floor(src).to(torch.long)
    frac = src - base.to(torch.float64)
    taps = torch.stack([base - 1, base, base + 1, base + 2]).clamp_(0, n - 1)
    weights = _keys_kernel(torch.stack([frac + 1.0, frac, 1.0 - frac, 2.0 - frac]))
    weights = weights.to(x.dtype)
    # The kernel sums to one across the four taps, so interpolating the
    # deviation from the nearest-left tap is algebraically the same weighted
    # sum while keeping constant fields bit-exact.
    anchor = torch.index_select(x, dim, taps[1])
    out = anchor
    wshape = [1] * x.dim()
    wshape[dim] = n * scale
    for t in (0, 2, 3):
        piece = torch.index_select(x, dim, taps[t]) - anchor
        out = out + piece * weights[t].view(wshape)
    return out


def bicubic_upsample(x: torch.Tensor, scale: int) -> torch.Tensor:
    """Separable bicubic upsampling on the trailing two axes.

    Half-pixel-centre source mapping with replicate borders; exact for
    constant fields.  Built by hand because the stock implementation uses a
    different kernel parameter.
    """
    scale = int(scale)
    if scale == 1:
        return x
    out = _interp_axis(x, scale, dim=-2)
    return _interp_axis(out, scale, dim=-1)


# ---------------------------------------------------------------------------
# synthesis

@dataclass
class SceneSample:
    sample_id: str
    lst_hr: np.ndarray    # (H, W) float32, kelvin
    lst_lr: np.ndarray    # (H/s, W/s) float32, kelvin
    guid_hr: np.ndarray   # (K, H, W) float32, mixed units


def _spectral_field(rng: np.random.Generator, size: int, exponent: float = -3.0) -> np.ndarray:
    """Zero-mean unit-variance field with an isotropic power-law spectrum."""
    freq = np.fft.fftfreq(size)
    kx, ky = np.meshgrid(freq, freq, indexing="ij")
    knorm = np.hypot(kx, ky)
    knorm[0, 0] = 1.0
    amp = knorm ** (exponent / 2.0)
    amp[0, 0] = 0.0
    phases = rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size))
    field = np.fft.ifft2(amp * phases).real
    std = field.std()
    if std < 1e-12:
        raise DegenerateInputError("synthesized field collapsed to a constant")
    return (field - field.mean()) / std


def _guidance_stack(rng: np.random.Generator, size: int, channels: int) -> np.ndarray:
    """Guidance channels: smoothed nonlinear views of two shared latents plus noise.

    The first six channels are deterministic functions of latents that also
    shape the temperature field, so guidance genuinely informs downscaling;
    the rest are distractor noise.  Units are intentionally mixed (one
    channel is elevation-like, in metres).
    """
    a = _spectral_field(rng, size)
    b = _spectral_field(rng, size)
    grad_b = np.hypot(*np.gradient(b))
    layers = [
        0.35 + 0.55 * np.tanh(a),                  # vegetation-index-like, [-0.2, 0.9]
        np.square(a) - 1.0,                        # curvature of latent a
        1500.0 + 800.0 * b,                        # elevation-like, metres
        grad_b / (grad_b.std() + 1e-12),           # slope-like
        a * b,
        np.tanh(b - a),
    ]
    layers = [gaussian_filter(layer, sigma=1.0) for layer in layers]
    while len(layers) < channels:
        if len(layers) % 2 == 0:
            layers.append(_spectral_field(rng, size, exponent=-2.0))
        else:
            layers.append(gaussian_filter(rng.standard_normal((size, size)), sigma=1.0))
    return np.stack(layers[:channels]).astype(np.float32)


GUIDANCE_ROLES = (
    "vegetation_index", "curvature", "elevation_m", "slope",
    "latent_product", "latent_contrast",
)


def guidance_roles(channels: int) -> list[str]:
    roles = list(GUIDANCE_ROLES[:channels])
    while len(roles) < channels:
        kind = "spectral_noise" if len(roles) % 2 == 0 else "white_noise"
        roles.append(f"{kind}_{len(roles)}")
    return roles


def synthesize_samples(
    count: int,
    hr_size: int,
    scale: int,
    seed: int,
    guidance_channels: int = 10,
) -> list[SceneSample]:
    """Generate ``count`` paired scenes as a pure function of the arguments."""
    if scale not in (2, 4, 8):
        raise ConfigError(f"scale must be one of (2, 4, 8), got {scale}")
    if hr_size % scale:
        raise ConfigError(f"hr_size {hr_size} must be divisible by scale {scale}")
    if count < 1:
        raise ConfigError("count must be >= 1")
    # Vegetation, curvature and elevation cool the surface; the rest warm it.
    signs = (-1.0, -1.0, -1.0, 1.0, 1.0, 1.0)
    samples = []
    for i in range(count):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), i])))
        guid = _guidance_stack(rng, hr_size, guidance_channels)
        # Scene character is a low-passed fresh field that survives the
        # degrade; the detail the degrade removes comes from the guidance
        # layers under per-scene mixing weights, so recovering it requires
        # conditioning on the guidance, not just sharpening.
        base = gaussian_filter(_spectral_field(rng, hr_size), sigma=1.5)
        field = 1.2 * base
        for j in range(min(guidance_channels, len(signs))):
            layer = guid[j].astype(np.float64)
            z = (layer - layer.mean()) / (layer.std() + 1e-12)
            field += signs[j] * rng.uniform(0.25, 0.75) * z
        lo = rng.uniform(275.0, 290.0)
        hi = lo + rng.uniform(10.0, 25.0)
        span = field.max() - field.min()
        if span < 1e-12:
            raise DegenerateInputError("temperature field collapsed to a constant")
        lst_hr = (lo + (field - field.min()) * (hi - lo) / span).astype(np.float32)
        lst_lr = wald_degrade(lst_hr.astype(np.float64), scale).astype(np.float32)
        samples.append(SceneSample(f"s{i:04d}", lst_hr, lst_lr, guid))
    return samples


# ---------------------------------------------------------------------------
# splits and statistics

def split_counts(n: int) -> tuple[int, int, int]:
    """Deterministic 60/10/30 split sizes; the test split absorbs rounding."""
    if n < 10:
        raise ConfigError(f"need at least 10 samples to split, got {n}")
    train = (6 * n) // 10
    val = n // 10
    return train, val, n - train - val


def assign_splits(ids: list[str], seed: int) -> dict[str, list[str]]:
    """Shuffle ids with the seed, then assign contiguous train/val/test runs."""
    train, val, _ = split_counts(len(ids))
    order = list(ids)
    seeded_generator(seed).shuffle(order)
    return {
        "train": order[:train],
        "val": order[train:train + val],
        "test": order[train + val:],
    }


def compute_stats(samples: list[SceneSample]) -> dict:
    """Pixel statistics over the given (training) samples, float64 throughout.

    Temperature statistics come from the high-resolution fields; guidance
    statistics are per channel.
    """
    if not samples:
        raise DegenerateInputError("cannot compute statistics over zero samples")
    # Fix the accumulation order so the result depends on the sample set only.
    samples = sorted(samples, key=lambda s: s.sample_id)
    lst = np.concatenate([s.lst_hr.reshape(-1).astype(np.float64) for s in samples])
    guid = np.concatenate(
        [s.guid_hr.reshape(s.guid_hr.shape[0], -1).astype(np.float64) for s in samples], axis=1
    )
    if lst.std() <= 0:
        raise DegenerateInputError("constant temperature field across the split")
    stds = guid.std(axis=1)
    for c, sd in enumerate(stds):
        if sd <= 0:
            raise DegenerateInputError(f"guidance channel {c} is constant across the split")
    return {
        "lst": {
            "mean": float(lst.mean()),
            "std": float(lst.std()),
            "min": float(lst.min()),
            "max": float(lst.max()),
        },
        "guidance": {
            "roles": guidance_roles(guid.shape[0]),
            "mean": guid.mean(axis=1).tolist(),
            "std": stds.tolist(),
            "min": guid.min(axis=1).tolist(),
            "max": guid.max(axis=1).tolist(),
        },
    }


class Normalizer:
    """Applies one normalization strategy, parameterized by stored statistics.

    All arithmetic runs in float64 and is cast back to the input dtype, so a
    forward/inverse round trip stays within float32 resolution.
    """

    def __init__(self, strategy: str, stats: dict):
        if strategy not in ("none", "zscore", "minmax"):
            raise ConfigError(f"unknown normalization strategy {strategy!r}")
        self.strategy = strategy
        self.stats = stats
        self._lst_shift, self._lst_scale = self._affine(stats["lst"])
        g = stats["guidance"]
        shifts, scales = zip(*(
            self._affine({k: g[k][c] for k in ("mean", "std", "min", "max")})
            for c in range(len(g["mean"]))
        ))
        self._guid_shift = np.asarray(shifts, dtype=np.float64)
        self._guid_scale = np.asarray(scales, dtype=np.float64)

    def _affine(self, s: dict) -> tuple[float, float]:
        if self.strategy == "none":
            return 0.0, 1.0
        if self.strategy == "zscore":
            if s["std"] <= 0:
                raise DegenerateInputError("zscore normalization with zero std")
            return float(s["mean"]), float(s["std"])
        if s["max"] <= s["min"]:
            raise DegenerateInputError("minmax normalization with max <= min")
        return float(s["min"]), float(s["max"] - s["min"])

    @staticmethod
    def _apply(x, shift, scale, inverse: bool):
        if isinstance(x, torch.Tensor):
            shift = torch.as_tensor(shift, dtype=torch.float64, device=x.device)
            scale = torch.as_tensor(scale, dtype=torch.float64, device=x.device)
            y = x.to(torch.float64)
            y = y * scale + shift if inverse else (y - shift) / scale
            return y.to(x.dtype)
        y = np.asarray(x, dtype=np.float64)
        y = y * scale + shift if inverse else (y - shift) / scale
        return y.astype(np.asarray(x).dtype)

    def lst_to_net(self, x):
        return self._apply(x, self._lst_shift, self._lst_scale, inverse=False)

    def lst_from_net(self, x):
        return self._apply(x, self._lst_shift, self._lst_scale, inverse=True)

    def guid_to_net(self, g):
        # Guidance is (K, H, W) or (B, K, H, W); stats broadcast over the channel axis.
        shift = self._guid_shift.reshape(-1, 1, 1)
        scale = self._guid_scale.reshape(-1, 1, 1)
        return self._apply(g, shift, scale, inverse=False)

    def kelvin_range(self) -> float:
        """Dynamic range of the training temperatures, for structural losses."""
        return float(self.stats["lst"]["max"] - self.stats["lst"]["min"])


# ---------------------------------------------------------------------------
# dataset directories

def _blob_path(root: Path, sample_id: str, name: str) -> Path:
    return root / sample_id / f"{name}.f32"


def write_dataset(
    out_dir: str | Path,
    samples: list[SceneSample],
    scale: int,
    seed: int,
) -> dict:
    """Write samples plus a manifest with splits and train-split statistics."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    ids = [s.sample_id for s in samples]
    splits = assign_splits(ids, seed)
    by_id = {s.sample_id: s for s in samples}
    stats = compute_stats([by_id[i] for i in splits["train"]])
    first = samples[0]
    manifest = {
        "format_version": FORMAT_VERSION,
        "count": len(samples),
        "hr_size": int(first.lst_hr.shape[0]),
        "scale": int(scale),
        "guidance_channels": int(first.guid_hr.shape[0]),
        "seed": int(seed),
        "sample_ids": ids,
        "splits": splits,
        "stats": stats,
    }
    for s in samples:
        sdir = root / s.sample_id
        sdir.mkdir(exist_ok=True)
        s.lst_hr.astype("<f4").tofile(_blob_path(root, s.sample_id, "lst_hr"))
        s.lst_lr.astype("<f4").tofile(_blob_path(root, s.sample_id, "lst_lr"))
        s.guid_hr.astype("<f4").tofile(_blob_path(root, s.sample_id, "guid_hr"))
    (root / MANIFEST_NAME).write_text(
        json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest


def synthesize_dataset(
    out_dir: str | Path,
    count: int,
    hr_size: int,
    scale: int,
    seed: int,
    guidance_channels: int = 10,
) -> dict:
    samples = synthesize_samples(count, hr_size, scale, seed, guidance_channels)
    return write_dataset(out_dir, samples, scale, seed)


class RasterDataset:
    """Reader for a dataset directory; samples load lazily from their blobs."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        manifest_path = self.root / MANIFEST_NAME
        if not manifest_path.is_file():
            raise ConfigError(f"{self.root} has no {MANIFEST_NAME}")
        self.manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        if self.manifest.get("format_version") != FORMAT_VERSION:
            raise ConfigError(f"unsupported dataset format in {manifest_path}")

    @property
    def scale(self) -> int:
        return int(self.manifest["scale"])

    @property
    def hr_size(self) -> int:
        return int(self.manifest["hr_size"])

    @property
    def guidance_channels(self) -> int:
        return int(self.manifest["guidance_channels"])

    @property
    def stats(self) -> dict:
        return self.manifest["stats"]

    def ids(self, split: str | None = None) -> list[str]:
        if split is None:
            return list(self.manifest["sample_ids"])
        if split not in self.manifest["splits"]:
            raise ConfigError(f"unknown split {split!r}")
        return list(self.manifest["splits"][split])

    def _read(self, sample_id: str, name: str, shape: tuple[int, ...]) -> np.ndarray:
        path = _blob_path(self.root, sample_id, name)
        flat = np.fromfile(path, dtype="<f4")
        expected = int(np.prod(shape))
        if flat.size != expected:
            raise ConfigError(f"{path} holds {flat.size} values, expected {expected}")
        if not np.isfinite(flat).all():
            raise NonFiniteError(f"{path} contains non-finite values")
        return flat.reshape(shape)

    def sample(self, sample_id: str) -> SceneSample:
        h = self.hr_size
        s = self.scale
        k = self.guidance_channels
        return SceneSample(
            sample_id,
            self._read(sample_id, "lst_hr", (h, h)),
            self._read(sample_id, "lst_lr", (h // s, h // s)),
            self._read(sample_id, "guid_hr", (k, h, h)),
        )

    def samples(self, split: str | None = None) -> list[SceneSample]:
        return [self.sample(i) for i in self.ids(split)]
