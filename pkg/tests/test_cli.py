import yaml
import pytest

from mocolsk.cli import main


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Run synth + train once; later tests score and plot the artifacts."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    run = root / "run"
    rc = main([
        "synth", "--out", str(data), "--count", "10", "--hr-size", "16",
        "--scale", "2", "--seed", "3", "--guidance-channels", "3",
    ])
    assert rc == 0
    cfg_path = root / "run.yaml"
    cfg_path.write_text(yaml.safe_dump({
        "network": {"scale": 2, "stages": 2, "base_dim": 8, "blocks_per_group": 1,
                    "guidance_channels": 3, "dmlp_hidden": 8},
        "optim": {"lr": 1e-3, "iterations": 6, "batch_size": 4},
        "val_every": 3,
    }))
    rc = main([
        "train", "--config", str(cfg_path), "--data", str(data), "--out", str(run),
    ])
    assert rc == 0
    return {"root": root, "data": data, "run": run, "config": cfg_path}


class TestSynth:
    def test_writes_manifest_and_snapshot(self, pipeline):
        data = pipeline["data"]
        assert (data / "manifest.json").is_file()
        assert (data / "synth.resolved.yaml").is_file()
        snap = yaml.safe_load((data / "synth.resolved.yaml").read_text())
        assert snap["command"] == "synth"
        assert snap["count"] == 10

    def test_output_root_env_redirects_relative_paths(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MOCOLSK_OUTPUT_ROOT", str(tmp_path))
        rc = main([
            "synth", "--out", "nested/set", "--count", "10", "--hr-size", "16",
            "--scale", "2", "--seed", "0", "--guidance-channels", "3",
        ])
        assert rc == 0
        assert (tmp_path / "nested" / "set" / "manifest.json").is_file()

    def test_invalid_scale_exits_one(self, tmp_path):
        with pytest.raises(SystemExit) as err:
            main(["synth", "--out", str(tmp_path / "x"), "--scale", "3"])
        assert err.value.code == 1


class TestTrain:
    def test_artifacts_exist(self, pipeline):
        run = pipeline["run"]
        assert (run / "history.csv").is_file()
        assert (run / "config.resolved.yaml").is_file()
        assert (run / "checkpoint" / "index.json").is_file()

    def test_missing_data_dir_exits_one(self, pipeline, tmp_path, capsys):
        rc = main([
            "train", "--config", str(pipeline["config"]),
            "--data", str(tmp_path / "nope"), "--out", str(tmp_path / "run"),
        ])
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_steps_flag_overrides_iterations(self, pipeline, tmp_path, capsys):
        rc = main([
            "train", "--config", str(pipeline["config"]), "--data", str(pipeline["data"]),
            "--out", str(tmp_path / "short"), "--steps", "2",
        ])
        assert rc == 0
        assert "trained 2 steps" in capsys.readouterr().out
        lines = (tmp_path / "short" / "history.csv").read_text().strip().split("\n")
        assert len(lines) == 3  # header + 2 steps


class TestEval:
    def test_writes_csv_and_snapshot(self, pipeline, tmp_path, capsys):
        out_csv = tmp_path / "metrics.csv"
        rc = main([
            "eval", "--ckpt", str(pipeline["run"] / "checkpoint"),
            "--data", str(pipeline["data"]), "--split", "test",
            "--out", str(out_csv),
        ])
        assert rc == 0
        lines = out_csv.read_text().strip().split("\n")
        assert lines[0] == "sample_id,rmse,mae,bias,cc,rsd"
        assert lines[-1].startswith("aggregate,")
        assert out_csv.with_name("metrics.csv.resolved.yaml").is_file()
        assert "report:" in capsys.readouterr().out

    def test_missing_checkpoint_exits_one(self, pipeline, tmp_path):
        rc = main([
            "eval", "--ckpt", str(tmp_path / "none"), "--data", str(pipeline["data"]),
            "--out", str(tmp_path / "m.csv"),
        ])
        assert rc == 1

    def test_replay_is_byte_identical(self, pipeline, tmp_path):
        argv = lambda p: [
            "eval", "--ckpt", str(pipeline["run"] / "checkpoint"),
            "--data", str(pipeline["data"]), "--split", "val", "--out", str(p),
        ]
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(argv(a)) == 0
        assert main(argv(b)) == 0
        assert a.read_bytes() == b.read_bytes()


class TestPlot:
    def test_writes_figure(self, pipeline, tmp_path):
        out = tmp_path / "diff.png"
        rc = main([
            "plot", "--ckpt", str(pipeline["run"] / "checkpoint"),
            "--data", str(pipeline["data"]), "--out", str(out),
        ])
        assert rc == 0
        assert out.is_file() and out.stat().st_size > 0
        assert out.with_name("diff.png.resolved.yaml").is_file()

    def test_unknown_sample_exits_one(self, pipeline, tmp_path):
        rc = main([
            "plot", "--ckpt", str(pipeline["run"] / "checkpoint"),
            "--data", str(pipeline["data"]), "--sample", "ghost",
            "--out", str(tmp_path / "p.png"),
        ])
        assert rc == 1


class TestGradcheck:
    def test_single_case_passes_and_writes_report(self, tmp_path, capsys):
        out = tmp_path / "grad.txt"
        rc = main(["gradcheck", "--case", "linear", "--out", str(out)])
        assert rc == 0
        assert "linear: max rel err" in capsys.readouterr().out
        assert "linear" in out.read_text()
        assert out.with_name("grad.txt.resolved.yaml").is_file()

    def test_wrecked_step_size_exits_two(self, capsys):
        rc = main(["gradcheck", "--case", "residual_group", "--eps", "10"])
        assert rc == 2
        assert "FAILED" in capsys.readouterr().err


class TestAblate:
    def test_norm_suite_writes_summary(self, pipeline, tmp_path, capsys):
        out = tmp_path / "ablate"
        rc = main([
            "ablate", "--suite", "norm", "--out", str(out),
            "--data", str(pipeline["data"]), "--steps", "2",
            "--base-dim", "8", "--blocks-per-group", "1",
        ])
        assert rc == 0
        assert (out / "ablate.resolved.yaml").is_file()
        printed = capsys.readouterr().out
        assert "suite norm" in printed


class TestDispatch:
    def test_no_subcommand_exits_one(self, capsys):
        assert main([]) == 1
        capsys.readouterr()

    def test_unknown_subcommand_exits_one(self):
        with pytest.raises(SystemExit) as err:
            main(["frobnicate"])
        assert err.value.code == 1
