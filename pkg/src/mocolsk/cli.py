"""Command-line surface: synth / train / eval / ablate / gradcheck / plot.

Exit codes: 0 success, 1 validation error (bad arguments, bad config, bad
paths), 2 runtime failure.  Every subcommand writes a resolved snapshot of
what it actually ran beside its outputs, and seeds all randomness up front,
so replaying a command reproduces its outputs byte for byte.
"""
from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

import yaml

from . import ablate as ablate_mod
from . import gradcheck as gradcheck_mod
from .config import RunConfig, load_run_config, run_config_to_dict
from .data import Normalizer, RasterDataset, synthesize_dataset
from .determinism import fixed_precision_mode
from .errors import ConfigError
from .metrics import evaluate, predict_kelvin
from .network import load_checkpoint
from .plotting import plot_diff_map
from .train import train_run

OUTPUT_ROOT_ENV = "MOCOLSK_OUTPUT_ROOT"


class _Parser(argparse.ArgumentParser):
    # Usage problems are validation errors: exit 1, not argparse's default 2.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _resolve_out(path: str) -> Path:
    root = os.environ.get(OUTPUT_ROOT_ENV)
    p = Path(path)
    if root and not p.is_absolute():
        return Path(root) / p
    return p


def _snapshot(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(payload, sort_keys=True), encoding="utf-8")


def _cmd_synth(args) -> int:
    fixed_precision_mode(args.seed)
    out = _resolve_out(args.out)
    manifest = synthesize_dataset(
        out, args.count, args.hr_size, args.scale, args.seed, args.guidance_channels
    )
    _snapshot(out / "synth.resolved.yaml", {
        "command": "synth", "out": str(out), "count": args.count,
        "hr_size": args.hr_size, "scale": args.scale, "seed": args.seed,
        "guidance_channels": args.guidance_channels,
    })
    splits = {k: len(v) for k, v in manifest["splits"].items()}
    print(f"wrote {manifest['count']} samples to {out} (splits: {splits})")
    return 0


def _load_base_config(args) -> RunConfig:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    if getattr(args, "data", None):
        cfg = dataclasses.replace(cfg, data=str(args.data))
    if getattr(args, "out", None):
        cfg = dataclasses.replace(cfg, output_dir=str(_resolve_out(args.out)))
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if getattr(args, "steps", None) is not None:
        cfg = dataclasses.replace(cfg, optim=dataclasses.replace(cfg.optim, iterations=args.steps, t0=None))
    return cfg


def _cmd_train(args) -> int:
    cfg = _load_base_config(args)
    outcome = train_run(cfg)
    last = outcome.history[-1]
    print(
        f"trained {outcome.final_step} steps; final loss {last['loss']:.6g}; "
        f"checkpoint at {outcome.checkpoint_dir}"
    )
    return 0


def _cmd_eval(args) -> int:
    fixed_precision_mode(args.seed)
    net, step, normalization = load_checkpoint(args.ckpt)
    dataset = RasterDataset(args.data)
    normalizer = Normalizer(normalization["strategy"], normalization["stats"])
    report = evaluate(net, dataset, args.split, normalizer)
    out_csv = _resolve_out(args.out)
    report.write_csv(out_csv)
    _snapshot(out_csv.with_name(out_csv.name + ".resolved.yaml"), {
        "command": "eval", "ckpt": str(args.ckpt), "data": str(args.data),
        "split": args.split, "out": str(out_csv), "seed": args.seed,
        "checkpoint_step": step,
    })
    agg = report.aggregate()
    cells = ", ".join(f"{k}={v:.4f}" for k, v in agg.items() if v is not None)
    print(f"{report.sample_count} samples ({report.degenerate} degenerate): {cells}")
    print(f"report: {out_csv}")
    return 0


def _cmd_ablate(args) -> int:
    out = _resolve_out(args.out)
    cfg = _load_base_config(args)
    if not cfg.data:
        data_dir = out / "data"
        fixed_precision_mode(args.seed or 0)
        synthesize_dataset(data_dir, args.count, args.hr_size, args.scale, cfg.seed)
        cfg = dataclasses.replace(cfg, data=str(data_dir))
    if args.config is None:
        dataset = RasterDataset(cfg.data)
        net_cfg = dataclasses.replace(
            cfg.network,
            scale=dataset.scale,
            guidance_channels=dataset.guidance_channels,
            base_dim=args.base_dim,
            blocks_per_group=args.blocks_per_group,
            variant_sequence=None,
        )
        optim = dataclasses.replace(cfg.optim, iterations=args.steps, t0=None)
        cfg = dataclasses.replace(cfg, network=net_cfg, optim=optim)
    _snapshot(out / "ablate.resolved.yaml", {
        "command": "ablate", "suite": args.suite, "out": str(out),
        "base_config": run_config_to_dict(cfg),
    })
    csv_path = ablate_mod.run_suite(args.suite, cfg, out)
    print(f"suite {args.suite}: {csv_path}")
    return 0


def _cmd_gradcheck(args) -> int:
    reports = gradcheck_mod.run_suite(
        args.case, eps=args.eps, seed=args.seed, max_elements=args.max_elements
    )
    for report in reports:
        print(report.format())
    failed = [r.case for r in reports if not r.passed]
    if args.out:
        out = _resolve_out(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text("\n".join(r.format() for r in reports) + "\n", encoding="utf-8")
        _snapshot(out.with_name(out.name + ".resolved.yaml"), {
            "command": "gradcheck", "cases": [r.case for r in reports],
            "eps": args.eps, "seed": args.seed, "max_elements": args.max_elements,
        })
    if failed:
        print(f"FAILED cases: {', '.join(failed)}", file=sys.stderr)
        return 2
    return 0


def _cmd_plot(args) -> int:
    fixed_precision_mode(args.seed)
    net, _, normalization = load_checkpoint(args.ckpt)
    dataset = RasterDataset(args.data)
    ids = dataset.ids(args.split)
    sample_id = args.sample or ids[0]
    if sample_id not in dataset.ids():
        raise ConfigError(f"sample {sample_id!r} not in dataset")
    sample = dataset.sample(sample_id)
    normalizer = Normalizer(normalization["strategy"], normalization["stats"])
    pred = predict_kelvin(net, sample, normalizer)
    out = _resolve_out(args.out)
    plot_diff_map(pred, sample.lst_hr, out, title=sample_id)
    _snapshot(out.with_name(out.name + ".resolved.yaml"), {
        "command": "plot", "ckpt": str(args.ckpt), "data": str(args.data),
        "sample": sample_id, "out": str(out), "seed": args.seed,
    })
    print(f"figure: {out}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="mocolsk", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic paired dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=64)
    p.add_argument("--hr-size", type=int, default=96)
    p.add_argument("--scale", type=int, default=4, choices=(2, 4, 8))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--guidance-channels", type=int, default=10)
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("train", help="train from a run config")
    p.add_argument("--config", default=None)
    p.add_argument("--data", default=None, help="override the config's dataset dir")
    p.add_argument("--out", default=None, help="override the config's output dir")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--steps", type=int, default=None, help="override iteration count")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("ablate", help="run a config-sweep suite")
    p.add_argument("--suite", required=True, choices=sorted(ablate_mod.SUITES))
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--data", default=None, help="dataset dir (synthesized if omitted)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--base-dim", type=int, default=16)
    p.add_argument("--blocks-per-group", type=int, default=4)
    p.add_argument("--count", type=int, default=12)
    p.add_argument("--hr-size", type=int, default=96)
    p.add_argument("--scale", type=int, default=4, choices=(2, 4, 8))
    p.set_defaults(fn=_cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p.add_argument("--case", action="append", default=None,
                   choices=sorted(gradcheck_mod.CASES), help="repeatable; default all")
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-elements", type=int, default=16)
    p.add_argument("--out", default=None, help="write the text report here")
    p.set_defaults(fn=_cmd_gradcheck)

    p = sub.add_parser("plot", help="render prediction + difference map")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--sample", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "fn", None):
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.fn(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 2
        print(f"failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
