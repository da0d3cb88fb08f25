"""Guided land-surface-temperature downscaling with modality-conditioned fusion."""

from .config import LossSpec, NetworkConfig, OptimSpec, RunConfig, load_run_config
from .data import RasterDataset, synthesize_dataset, wald_degrade
from .errors import ConfigError, DegenerateInputError, NonFiniteError
from .network import MoCoLSKNet, build_network, load_checkpoint, save_checkpoint

__all__ = [
    "ConfigError",
    "DegenerateInputError",
    "LossSpec",
    "MoCoLSKNet",
    "NetworkConfig",
    "NonFiniteError",
    "OptimSpec",
    "RasterDataset",
    "RunConfig",
    "build_network",
    "load_checkpoint",
    "load_run_config",
    "save_checkpoint",
    "synthesize_dataset",
    "wald_degrade",
]

__version__ = "0.1.0"
