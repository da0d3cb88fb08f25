"""End-to-end acceptance audit.

Each test checks one release gate at its stated tolerance and prints a single
PASS/FAIL line (visible with ``pytest -s`` or ``-rA``).  The final gate is a
full-data reproduction target that needs the public GrokLST dataset and an
overnight GPU run; it is documented in the README and skipped here.
"""
import time

import numpy as np
import pytest
import torch
import torch.nn.functional as F
import yaml

import oracles
from mocolsk.cli import main
from mocolsk.config import NetworkConfig, OptimSpec, RunConfig
from mocolsk.data import Normalizer, RasterDataset, bicubic_upsample, synthesize_dataset
from mocolsk.determinism import fixed_precision_mode, seeded_generator
from mocolsk.fusion import per_sample_conv, receptive_field
from mocolsk.gradcheck import run_suite
from mocolsk.metrics import METRIC_NAMES, evaluate, predict_kelvin, rmse, sample_metrics
from mocolsk.network import (
    build_network,
    load_checkpoint,
    save_checkpoint,
    set_zero_modality_weights,
    zero_projection_head,
)
from mocolsk.train import train


def _verdict(num: int, ok: bool, detail: str) -> None:
    print(f"criterion {num:02d}: {'PASS' if ok else 'FAIL'} | {detail}")
    assert ok, f"criterion {num:02d}: {detail}"


@pytest.fixture(scope="module")
def accept_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="module")
def micro_set(accept_dir):
    """Synthetic paired set matching the default micro config (10 guidance bands)."""
    root = accept_dir / "micro_set"
    synthesize_dataset(root, count=10, hr_size=24, scale=2, seed=31)
    return RasterDataset(root)


@pytest.fixture(scope="module")
def overfit_run(micro_set, accept_dir):
    """Default micro config trained 500 steps on 4 training samples."""
    cfg = RunConfig(
        network=NetworkConfig(scale=2, stages=2, base_dim=16),
        optim=OptimSpec(),
        data=str(micro_set.root),
        output_dir=str(accept_dir / "overfit"),
        seed=0,
        val_every=100,
    )
    fixed_precision_mode(cfg.seed)
    net = build_network(cfg.network, cfg.seed)
    train_ids = micro_set.ids("train")[:4]
    val_ids = micro_set.ids("val")
    start = time.time()
    train(net, micro_set, cfg, accept_dir / "overfit",
          train_ids=train_ids, val_ids=val_ids)
    wall = time.time() - start
    return {"net": net, "cfg": cfg, "train_ids": train_ids,
            "val_ids": val_ids, "wall": wall}


@pytest.fixture(scope="module")
def signal_run(accept_dir):
    """Micro config trained 1500 steps on a full training split (72 samples)."""
    root = accept_dir / "signal_set"
    synthesize_dataset(root, count=120, hr_size=24, scale=2, seed=47)
    dataset = RasterDataset(root)
    cfg = RunConfig(
        network=NetworkConfig(scale=2, stages=2, base_dim=16),
        optim=OptimSpec(iterations=1500),
        data=str(root),
        output_dir=str(accept_dir / "signal"),
        seed=0,
        val_every=250,
    )
    fixed_precision_mode(cfg.seed)
    net = build_network(cfg.network, cfg.seed)
    train(net, dataset, cfg, accept_dir / "signal")
    return {"net": net, "cfg": cfg, "dataset": dataset}


def test_c01_bicubic_anchor():
    start = time.time()
    checked = 0
    for scale in (2, 4, 8):
        cfg = NetworkConfig(scale=scale, stages=2, base_dim=8, blocks_per_group=1,
                            guidance_channels=3, dmlp_hidden=8)
        net = build_network(cfg, seed=1)
        zero_projection_head(net)
        net.eval()
        torch.manual_seed(scale)
        for _ in range(20):
            lst = 300.0 + 20.0 * torch.randn(1, 1, 6, 6)
            guid = torch.randn(1, 3, 6 * scale, 6 * scale)
            with torch.no_grad():
                out = net(lst, guid)
            assert torch.equal(out, bicubic_upsample(lst, scale))
            checked += 1
    wall = time.time() - start
    _verdict(1, checked == 60 and wall < 60.0,
             f"zeroed-head output bit-equal to bicubic on {checked}/60 inputs "
             f"across scales 2/4/8 ({wall:.1f}s)")


def test_c02_gradient_suite():
    start = time.time()
    reports = run_suite()
    wall = time.time() - start
    worst = {r.case: r.max_rel_err for r in reports}
    ok = all(r.passed for r in reports) and len(reports) == 12 and wall < 300.0
    _verdict(2, ok,
             f"12 finite-difference cases, worst rel err {max(worst.values()):.2e} "
             f"(network {worst['network']:.2e} < 1e-3, modules < 1e-4) ({wall:.1f}s)")


def test_c03_dynamic_static_equivalence():
    # Shared-kernel banks must reduce the per-sample path to plain convolution.
    # Run in float64: the two routes sum in different orders, so float32 noise
    # (~3e-6) would mask the algebraic claim the tolerance is about.
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(50):
        b = int(rng.integers(1, 5))
        cin = int(rng.integers(1, 5))
        cout = int(rng.integers(1, 5))
        k = int(rng.choice((1, 3, 5)))
        h = int(rng.integers(k, 11))
        w = int(rng.integers(k, 11))
        x = torch.from_numpy(rng.standard_normal((b, cin, h, w)))
        kernel = torch.from_numpy(rng.standard_normal((cout, cin, k, k)))
        bank = kernel.unsqueeze(0).expand(b, -1, -1, -1, -1)
        dyn = per_sample_conv(x, bank)
        static = F.conv2d(x, kernel, padding=k // 2)
        worst = max(worst, float((dyn - static).abs().max()))
    _verdict(3, worst < 1e-6,
             f"50 shared-kernel cases, max abs diff vs plain conv {worst:.2e} < 1e-6")


def test_c04_receptive_field_table():
    table = {
        ((23, 1),): 23,
        ((3, 1), (3, 2)): 7,
        ((3, 1), (5, 2)): 11,
        ((5, 1), (7, 3)): 23,
        ((7, 1), (9, 4)): 39,
        ((9, 1), (11, 5)): 59,
    }
    got = {spec: receptive_field(spec) for spec in table}
    _verdict(4, got == table,
             f"receptive fields for 6 decompositions exact: "
             f"{sorted(got.values())}")


def test_c05_metrics_oracle():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        sr = 300.0 + 2.0 * rng.standard_normal((8, 8))
        hr = 300.0 + 2.0 * rng.standard_normal((8, 8))
        ours = sample_metrics(sr, hr)
        ref = oracles.metrics(sr, hr)
        for name in METRIC_NAMES:
            worst = max(worst, abs(ours[name] - ref[name]))
        assert ours["rmse"] >= ours["mae"] >= abs(ours["bias"])
        assert -1.0 <= ours["cc"] <= 1.0
        shifted = sample_metrics(sr + 5.0, hr + 5.0)
        assert abs(shifted["rsd"] - ours["rsd"]) < 1e-9
        gained = sample_metrics(3.0 * sr + 2.0, hr)
        assert abs(gained["cc"] - ours["cc"]) < 1e-9
        assert abs(sample_metrics(hr, sr)["bias"] + ours["bias"]) < 1e-12
    _verdict(5, worst < 1e-9,
             f"rmse/mae/bias/cc/rsd vs scalar oracle on 100 grids, "
             f"max abs diff {worst:.2e} < 1e-9; orderings and invariances hold")


def test_c06_normalization_equivalence(micro_set, accept_dir):
    # The de-normalized metric path must not depend on the storage encoding.
    # A zeroed head makes the checkpoint's kelvin-space function identical
    # under affine re-encodings; float64 evaluation keeps the round trip exact
    # so the comparison measures the pipeline, not float32 rounding.
    ckpt = accept_dir / "c6_ckpt"
    fixed_precision_mode(0)
    net = build_network(NetworkConfig(scale=2, stages=2, base_dim=16), seed=5)
    zero_projection_head(net)
    save_checkpoint(net, ckpt, 0, {"strategy": "zscore", "stats": micro_set.stats})

    def cells(report):
        vals = []
        for row in report.rows:
            vals.extend(row[m] for m in METRIC_NAMES)
        agg = report.aggregate()
        vals.extend(agg[m] for m in METRIC_NAMES)
        return np.array([v for v in vals if v is not None])

    results = {}
    for strategy in ("none", "zscore", "minmax"):
        loaded, _, _ = load_checkpoint(ckpt)
        results[strategy] = cells(
            evaluate(loaded.double(), micro_set, "test",
                     Normalizer(strategy, micro_set.stats))
        )
    worst = max(
        float(np.abs(results[s] - results["none"]).max())
        for s in ("zscore", "minmax")
    )
    _verdict(6, worst < 1e-6,
             f"kelvin metric reports across none/zscore/minmax, "
             f"max cell delta {worst:.2e} < 1e-6")


def test_c07_overfit_smoke(micro_set, overfit_run):
    net = overfit_run["net"]
    set_zero_modality_weights(net, False)
    normalizer = Normalizer(overfit_run["cfg"].normalization, micro_set.stats)
    trained, baseline = [], []
    for sid in overfit_run["train_ids"]:
        sample = micro_set.sample(sid)
        hr = sample.lst_hr.astype(np.float64)
        pred = predict_kelvin(net, sample, normalizer)
        lr = torch.from_numpy(sample.lst_lr.astype(np.float64))[None, None]
        bic = bicubic_upsample(lr, micro_set.scale)[0, 0].numpy()
        trained.append(rmse(pred, hr))
        baseline.append(rmse(bic, hr))
    ratio = float(np.mean(trained) / np.mean(baseline))
    ok = ratio < 0.5 and overfit_run["wall"] < 600.0
    _verdict(7, ok,
             f"500-step overfit train RMSE {np.mean(trained):.3f} K = "
             f"{ratio:.2f}x bicubic {np.mean(baseline):.3f} K "
             f"(< 0.5x, {overfit_run['wall']:.0f}s)")


def test_c08_modality_weights_carry_signal(signal_run):
    # The overfit model of criterion 7 cannot carry this claim: a pathway fit
    # to 4 samples has no generalizing signal to lose.  Train on a full
    # training split until validation RMSE beats bicubic, then ablate the
    # trained model in place.
    net = signal_run["net"]
    dataset = signal_run["dataset"]
    normalizer = Normalizer(signal_run["cfg"].normalization, dataset.stats)
    set_zero_modality_weights(net, False)
    full = evaluate(net, dataset, "val", normalizer).aggregate()["rmse"]
    set_zero_modality_weights(net, True)
    ablated = evaluate(net, dataset, "val", normalizer).aggregate()["rmse"]
    set_zero_modality_weights(net, False)
    _verdict(8, ablated > full,
             f"zeroing generated selection weights degrades val RMSE "
             f"{full:.3f} -> {ablated:.3f} K")


def test_c09_command_replay(accept_dir):
    root = accept_dir / "replay"

    def synth(out):
        rc = main(["synth", "--out", str(out), "--count", "10", "--hr-size", "16",
                   "--scale", "2", "--seed", "13", "--guidance-channels", "3"])
        assert rc == 0

    synth(root / "data_a")
    synth(root / "data_b")
    data_files = sorted(
        p.relative_to(root / "data_a")
        for p in (root / "data_a").rglob("*")
        if p.is_file() and p.suffix != ".yaml"  # snapshots embed the out path
    )
    for rel in data_files:
        assert (root / "data_a" / rel).read_bytes() == (root / "data_b" / rel).read_bytes(), rel

    cfg_path = root / "run.yaml"
    cfg_path.write_text(yaml.safe_dump({
        "network": {"scale": 2, "stages": 2, "base_dim": 8, "blocks_per_group": 1,
                    "guidance_channels": 3, "dmlp_hidden": 8},
        "optim": {"lr": 1e-3, "iterations": 4, "batch_size": 4},
    }))

    def train_cmd(out):
        rc = main(["train", "--config", str(cfg_path),
                   "--data", str(root / "data_a"), "--out", str(out)])
        assert rc == 0

    train_cmd(root / "run_a")
    train_cmd(root / "run_b")
    for rel in ("history.csv", "checkpoint/params.f32", "checkpoint/index.json"):
        assert (root / "run_a" / rel).read_bytes() == (root / "run_b" / rel).read_bytes(), rel

    def eval_cmd(out):
        rc = main(["eval", "--ckpt", str(root / "run_a" / "checkpoint"),
                   "--data", str(root / "data_a"), "--out", str(out)])
        assert rc == 0

    eval_cmd(root / "metrics_a.csv")
    eval_cmd(root / "metrics_b.csv")
    assert (root / "metrics_a.csv").read_bytes() == (root / "metrics_b.csv").read_bytes()
    _verdict(9, True,
             f"synth/train/eval replays byte-identical "
             f"({len(data_files)} data files, history, checkpoint, metrics)")


def test_c10_full_data_target():
    print("criterion 10: SKIP | x8 test RMSE <= 0.90 K on the public GrokLST "
          "set; overnight GPU reproduction target, see README")
    pytest.skip("needs the GrokLST dataset and GPU-scale training; excluded from CI")
