"""Reconstruction quality metrics, computed in kelvin at float64.

Per-sample values are aggregated by an unweighted mean.  Degenerate
samples (zero variance where a metric needs spread) raise
:class:`DegenerateInputError` at the single-sample level; the evaluation
report records them as missing and counts them instead of silently
propagating NaN.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data import Normalizer, RasterDataset
from .errors import DegenerateInputError

METRIC_NAMES = ("rmse", "mae", "bias", "cc", "rsd")


def _pair(sr, hr) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(sr, dtype=np.float64).reshape(-1)
    b = np.asarray(hr, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {np.shape(sr)} vs {np.shape(hr)}")
    return a, b


def rmse(sr, hr) -> float:
    a, b = _pair(sr, hr)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def mae(sr, hr) -> float:
    a, b = _pair(sr, hr)
    return float(np.mean(np.abs(a - b)))


def bias(sr, hr) -> float:
    a, b = _pair(sr, hr)
    return float(np.mean(a - b))


def cc(sr, hr) -> float:
    """Pearson correlation with population (1/N) normalization."""
    a, b = _pair(sr, hr)
    da, db = a - a.mean(), b - b.mean()
    sa = np.sqrt(np.mean(da ** 2))
    sb = np.sqrt(np.mean(db ** 2))
    if sa == 0.0 or sb == 0.0:
        raise DegenerateInputError("correlation undefined for a constant grid")
    return float(np.mean(da * db) / (sa * sb))


def rsd(sr, hr) -> float:
    """Relative gap between sample (N-1) standard deviations."""
    a, b = _pair(sr, hr)
    if a.size < 2:
        raise DegenerateInputError("need at least 2 values for a sample std")
    sa = float(np.std(a, ddof=1))
    sb = float(np.std(b, ddof=1))
    if sb == 0.0:
        raise DegenerateInputError("reference grid has zero variance")
    return abs(sa - sb) / sb


def sample_metrics(sr, hr) -> dict[str, float | None]:
    """All five metrics for one pair; degenerate cc/rsd become None."""
    out: dict[str, float | None] = {
        "rmse": rmse(sr, hr),
        "mae": mae(sr, hr),
        "bias": bias(sr, hr),
    }
    for name, fn in (("cc", cc), ("rsd", rsd)):
        try:
            out[name] = fn(sr, hr)
        except DegenerateInputError:
            out[name] = None
    return out


@dataclass
class MetricReport:
    rows: list[dict] = field(default_factory=list)   # sample_id + metric columns
    scale: int = 0
    degenerate: int = 0

    @property
    def sample_count(self) -> int:
        return len(self.rows)

    def aggregate(self) -> dict[str, float | None]:
        agg: dict[str, float | None] = {}
        for name in METRIC_NAMES:
            values = [r[name] for r in self.rows if r[name] is not None]
            agg[name] = float(np.mean(values)) if values else None
        return agg

    def write_csv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("sample_id",) + METRIC_NAMES)
            for row in self.rows:
                writer.writerow([row["sample_id"]] + [_cell(row[n]) for n in METRIC_NAMES])
            agg = self.aggregate()
            writer.writerow(["aggregate"] + [_cell(agg[n]) for n in METRIC_NAMES])


def _cell(value) -> str:
    return "" if value is None else f"{value:.9g}"


def build_report(pairs: list[tuple[str, np.ndarray, np.ndarray]], scale: int = 0) -> MetricReport:
    report = MetricReport(scale=scale)
    for sample_id, sr, hr in pairs:
        row = {"sample_id": sample_id, **sample_metrics(sr, hr)}
        if row["cc"] is None or row["rsd"] is None:
            report.degenerate += 1
        report.rows.append(row)
    return report


def predict_kelvin(net, sample, normalizer: Normalizer) -> np.ndarray:
    """Run one sample through the network and return the kelvin field (H, W).

    Normalization runs in float64 on both sides; the net's parameter dtype is
    imposed only at its boundary, so the de-normalized field never picks up a
    float32 quantization beyond what the network itself produced.
    """
    dtype = next(net.parameters()).dtype
    lst = normalizer.lst_to_net(sample.lst_lr.astype(np.float64))
    guid = normalizer.guid_to_net(sample.guid_hr.astype(np.float64))
    lst = torch.from_numpy(np.ascontiguousarray(lst))[None, None].to(dtype)
    guid = torch.from_numpy(np.ascontiguousarray(guid))[None].to(dtype)
    with torch.no_grad():
        pred = net(lst, guid)
    pred = pred[0, 0].to(torch.float64).numpy()
    return np.asarray(normalizer.lst_from_net(pred), dtype=np.float64)


def evaluate(
    net,
    dataset: RasterDataset,
    split: str,
    normalizer: Normalizer,
    ids: list[str] | None = None,
) -> MetricReport:
    """Metric report over a split, with predictions de-normalized to kelvin."""
    net.eval()
    pairs = []
    for sample_id in (ids if ids is not None else dataset.ids(split)):
        sample = dataset.sample(sample_id)
        sr = predict_kelvin(net, sample, normalizer)
        pairs.append((sample_id, sr, sample.lst_hr.astype(np.float64)))
    return build_report(pairs, scale=dataset.scale)
