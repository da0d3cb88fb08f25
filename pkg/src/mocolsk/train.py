"""Seeded training loop over a dataset directory.

The loop normalizes inputs with the configured strategy, but the objective
and the periodic validation RMSE are computed on de-normalized kelvin
fields.  Under fixed-precision mode the whole run is a pure function of
(config, data, seed): loss history and checkpoint bytes replay exactly.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import RunConfig, save_resolved_config
from .data import Normalizer, RasterDataset
from .determinism import fixed_precision_mode, seeded_generator
from .errors import ConfigError, NonFiniteError
from .losses import combined_loss, lr_schedule
from .metrics import predict_kelvin, rmse
from .network import MoCoLSKNet, build_network, save_checkpoint


class BatchSampler:
    """Seeded shuffled id batches; reshuffles per epoch, drops ragged tails."""

    def __init__(self, ids: list[str], batch_size: int, rng: np.random.Generator):
        if not ids:
            raise ConfigError("cannot train on an empty id list")
        self.ids = list(ids)
        self.batch_size = min(batch_size, len(ids))
        self.rng = rng
        self._queue: list[str] = []

    def next(self) -> list[str]:
        if len(self._queue) < self.batch_size:
            self._queue = [self.ids[j] for j in self.rng.permutation(len(self.ids))]
        batch, self._queue = self._queue[:self.batch_size], self._queue[self.batch_size:]
        return batch


@dataclass
class TrainOutcome:
    history: list[dict] = field(default_factory=list)
    checkpoint_dir: Path | None = None
    final_step: int = 0


def write_history_csv(history: list[dict], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("step", "loss", "lr", "val_rmse"))
        for row in history:
            val = "" if row["val_rmse"] is None else f"{row['val_rmse']:.9g}"
            writer.writerow((row["step"], f"{row['loss']:.9g}", f"{row['lr']:.9g}", val))


def _batch_tensors(samples: dict, ids: list[str], normalizer: Normalizer):
    lst = np.stack([normalizer.lst_to_net(samples[i].lst_lr) for i in ids])[:, None]
    guid = np.stack([normalizer.guid_to_net(samples[i].guid_hr) for i in ids])
    hr = np.stack([samples[i].lst_hr for i in ids])[:, None]
    return (
        torch.from_numpy(lst.astype(np.float32)),
        torch.from_numpy(guid.astype(np.float32)),
        torch.from_numpy(hr.astype(np.float32)),
    )


def validation_rmse(net: MoCoLSKNet, samples: list, normalizer: Normalizer) -> float:
    net.eval()
    values = [rmse(predict_kelvin(net, s, normalizer), s.lst_hr) for s in samples]
    net.train()
    return float(np.mean(values))


def train(
    net: MoCoLSKNet,
    dataset: RasterDataset,
    cfg: RunConfig,
    out_dir: str | Path,
    train_ids: list[str] | None = None,
    val_ids: list[str] | None = None,
) -> TrainOutcome:
    """Run the configured number of AdamW steps and write history + checkpoint."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = cfg.optim
    normalizer = Normalizer(cfg.normalization, dataset.stats)
    loss_spec = cfg.loss.with_data_range(normalizer.kelvin_range())

    train_ids = list(train_ids if train_ids is not None else dataset.ids("train"))
    val_ids = list(val_ids if val_ids is not None else dataset.ids("val"))
    cache = {i: dataset.sample(i) for i in {*train_ids, *val_ids}}
    val_samples = [cache[i] for i in val_ids]

    sampler = BatchSampler(train_ids, spec.batch_size, seeded_generator(cfg.seed))
    optimizer = torch.optim.AdamW(net.parameters(), lr=spec.lr, weight_decay=spec.weight_decay)

    net.train()
    outcome = TrainOutcome()
    for i in range(spec.iterations):
        lr = lr_schedule(i, spec.lr, spec.t0, spec.t_mult, spec.lr_min)
        for group in optimizer.param_groups:
            group["lr"] = lr
        lst, guid, hr = _batch_tensors(cache, sampler.next(), normalizer)
        pred = normalizer.lst_from_net(net(lst, guid))
        loss = combined_loss(pred, hr, loss_spec)
        if not torch.isfinite(loss):
            raise NonFiniteError(f"non-finite loss at step {i + 1}")
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()

        step = i + 1
        val = None
        if val_samples and step % cfg.val_every == 0:
            val = validation_rmse(net, val_samples, normalizer)
        outcome.history.append({"step": step, "loss": float(loss.detach()), "lr": lr, "val_rmse": val})

    outcome.final_step = spec.iterations
    outcome.checkpoint_dir = out / "checkpoint"
    save_checkpoint(
        net, outcome.checkpoint_dir, step=spec.iterations,
        normalization={"strategy": cfg.normalization, "stats": dataset.stats},
    )
    write_history_csv(outcome.history, out / "history.csv")
    return outcome


def train_run(cfg: RunConfig, out_dir: str | Path | None = None) -> TrainOutcome:
    """CLI-shaped entry: seed everything, build the network, train, snapshot config."""
    if not cfg.data:
        raise ConfigError("run config has no data directory")
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    if not str(out):
        raise ConfigError("no output directory given")
    fixed_precision_mode(cfg.seed)
    dataset = RasterDataset(cfg.data)
    if dataset.guidance_channels != cfg.network.guidance_channels:
        raise ConfigError(
            f"dataset has {dataset.guidance_channels} guidance channels, "
            f"config expects {cfg.network.guidance_channels}"
        )
    if dataset.scale != cfg.network.scale:
        raise ConfigError(f"dataset scale {dataset.scale} != config scale {cfg.network.scale}")
    net = build_network(cfg.network, cfg.seed)
    out.mkdir(parents=True, exist_ok=True)
    save_resolved_config(cfg, out / "config.resolved.yaml")
    return train(net, dataset, cfg, out)
