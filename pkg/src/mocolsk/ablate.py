"""Config-sweep ablation suites.

Each suite is a list of (case name, run config) pairs derived from one base
config.  Every case trains from the same seed in its own directory and is
scored on the test split; the suite writes one comparison CSV.  At desk
scale the sweeps exercise the wiring, they do not reproduce orderings.
"""
from __future__ import annotations

import csv
import dataclasses
from pathlib import Path

from .config import RunConfig
from .data import Normalizer, RasterDataset
from .errors import ConfigError
from .metrics import METRIC_NAMES, evaluate
from .network import load_checkpoint
from .train import train_run

KERNEL_SEQUENCES = (
    ((23, 1),),
    ((3, 1), (3, 2)),
    ((3, 1), (5, 2)),
    ((5, 1), (7, 3)),
    ((7, 1), (9, 4)),
    ((9, 1), (11, 5)),
)

SELECTION_SEQUENCES = (
    "SSSS", "CCCC", "SCSC", "CSCS", "CCSS", "SSCC", "CSCC", "SCSS",
)

UNIFORM_VARIANTS = ("baseline", "sk-m", "lsk-m", "lsk-cs-m", "mocolsk-ex", "mocolsk-ss")

LOSS_CASES = (
    ("l1", (("l1", 1.0),)),
    ("ssim", (("ssim", 1.0),)),
    ("ms_ssim", (("ms-ssim", 1.0),)),
    ("ssim30_l1_70", (("ssim", 0.3), ("l1", 0.7))),
    ("ssim50_l1_50", (("ssim", 0.5), ("l1", 0.5))),
    ("ssim70_l1_30", (("ssim", 0.7), ("l1", 0.3))),
    ("ssim84_l1_16", (("ssim", 0.84), ("l1", 0.16))),
    ("ms_ssim84_l1_16", (("ms-ssim", 0.84), ("l1", 0.16))),
)


def _net(cfg: RunConfig, **kw) -> RunConfig:
    return dataclasses.replace(cfg, network=dataclasses.replace(cfg.network, **kw))


def _component_cases(cfg: RunConfig):
    return [
        ("case1_projection_only",
         _net(cfg, variant_sequence=("baseline",) * cfg.network.stages)),
        ("case2_single_kernel", _net(cfg, kernel_spec=((23, 1),))),
        ("case3_static_conv", _net(cfg, dynamic_conv=False)),
        ("case4_no_fusion", _net(cfg, fuse_guidance=False)),
        ("case5_avgmax_pool", _net(cfg, mcwg_pooling="avgmax")),
        ("case6_full", cfg),
    ]


def _kernel_cases(cfg: RunConfig):
    return [
        ("_".join(f"{k}x{d}" for k, d in spec), _net(cfg, kernel_spec=spec))
        for spec in KERNEL_SEQUENCES
    ]


def _stage_cases(cfg: RunConfig):
    return [
        (f"stages{n}", _net(cfg, stages=n, variant_sequence=None))
        for n in (1, 2, 3, 4, 5)
    ]


def _dim_cases(cfg: RunConfig):
    return [(f"dim{d}", _net(cfg, base_dim=d)) for d in (16, 24, 32, 40)]


def _selection_cases(cfg: RunConfig):
    return [
        (seq, _net(cfg, stages=4, variant_sequence=tuple(seq)))
        for seq in SELECTION_SEQUENCES
    ]


def _variant_cases(cfg: RunConfig):
    return [
        (tag, _net(cfg, variant_sequence=(tag,) * cfg.network.stages))
        for tag in UNIFORM_VARIANTS
    ]


def _norm_cases(cfg: RunConfig):
    return [
        (strategy, dataclasses.replace(cfg, normalization=strategy))
        for strategy in ("none", "zscore", "minmax")
    ]


def _loss_cases(cfg: RunConfig):
    out = []
    for name, terms in LOSS_CASES:
        loss = dataclasses.replace(cfg.loss, terms=terms, ms_scales=3)
        out.append((name, dataclasses.replace(cfg, loss=loss)))
    return out


def _pooling_cases(cfg: RunConfig):
    return [
        (mode, _net(cfg, mcwg_pooling=mode))
        for mode in ("ppm", "avg", "max", "avgmax")
    ]


SUITES = {
    "component": _component_cases,
    "kernel": _kernel_cases,
    "stages": _stage_cases,
    "dims": _dim_cases,
    "selection": _selection_cases,
    "variants": _variant_cases,
    "norm": _norm_cases,
    "loss": _loss_cases,
    "pooling": _pooling_cases,
}


def suite_cases(suite: str, base_cfg: RunConfig) -> list[tuple[str, RunConfig]]:
    if suite not in SUITES:
        raise ConfigError(f"unknown suite {suite!r}; valid: {sorted(SUITES)}")
    return SUITES[suite](base_cfg)


def run_suite(suite: str, base_cfg: RunConfig, out_dir: str | Path) -> Path:
    """Train and score every case; returns the path of the comparison CSV."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for name, cfg in suite_cases(suite, base_cfg):
        case_dir = out / name
        cfg = dataclasses.replace(cfg, output_dir=str(case_dir))
        outcome = train_run(cfg)
        net, _, normalization = load_checkpoint(outcome.checkpoint_dir)
        dataset = RasterDataset(cfg.data)
        normalizer = Normalizer(normalization["strategy"], normalization["stats"])
        report = evaluate(net, dataset, "test", normalizer)
        report.write_csv(case_dir / "metrics.csv")
        rows.append((name, report.aggregate()))
    csv_path = out / f"suite_{suite}.csv"
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("case",) + METRIC_NAMES)
        for name, agg in rows:
            writer.writerow(
                [name] + ["" if agg[m] is None else f"{agg[m]:.9g}" for m in METRIC_NAMES]
            )
    return csv_path
