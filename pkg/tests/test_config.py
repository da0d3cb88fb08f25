import dataclasses

import pytest
import yaml

from mocolsk.config import (
    LossSpec,
    NetworkConfig,
    OptimSpec,
    RunConfig,
    canonical_variant,
    load_run_config,
    run_config_from_dict,
    run_config_to_dict,
    save_resolved_config,
    validate_kernel_spec,
)
from mocolsk.errors import ConfigError


class TestNetworkConfig:
    def test_default_stage_dims(self):
        cfg = NetworkConfig()
        assert cfg.stage_dims() == [32, 64, 96, 128]
        assert cfg.fusion_out_dims() == [64, 96, 128, 128]

    def test_final_stage_width_is_capped(self):
        cfg = NetworkConfig(stages=3, base_dim=16, scale=4)
        assert cfg.stage_dims() == [16, 32, 48]
        assert cfg.fusion_out_dims() == [32, 48, 48]

    def test_variant_sequence_defaults_to_ss(self):
        cfg = NetworkConfig(stages=2, scale=2)
        assert cfg.variant_sequence == ("mocolsk-ss", "mocolsk-ss")

    def test_variant_sequence_aliases_are_canonicalized(self):
        cfg = NetworkConfig(stages=3, scale=2, variant_sequence=("S", "c", "baseline"))
        assert cfg.variant_sequence == ("mocolsk-ss", "mocolsk-cs", "baseline")

    def test_variant_sequence_length_must_match_stages(self):
        with pytest.raises(ConfigError):
            NetworkConfig(stages=4, variant_sequence=("ss", "ss"))

    @pytest.mark.parametrize("scale", [1, 3, 16, 0])
    def test_invalid_scale(self, scale):
        with pytest.raises(ConfigError):
            NetworkConfig(scale=scale)

    def test_base_dim_must_divide_by_reduction(self):
        with pytest.raises(ConfigError):
            NetworkConfig(base_dim=30, attention_reduction=4)

    def test_even_dconv_kernel_rejected(self):
        with pytest.raises(ConfigError):
            NetworkConfig(dconv_kernel=4)

    def test_unknown_variant_rejected(self):
        with pytest.raises(ConfigError):
            canonical_variant("frobnicate")


class TestKernelSpec:
    def test_normalizes_to_pairs(self):
        assert validate_kernel_spec([[5, 1], (7, 3)]) == ((5, 1), (7, 3))

    def test_single_entry_allowed(self):
        assert validate_kernel_spec([(23, 1)]) == ((23, 1),)

    @pytest.mark.parametrize("spec", [[], [(4, 1)], [(5, 0)], [(3, 1), (3, 1), (3, 1)]])
    def test_invalid_specs(self, spec):
        with pytest.raises(ConfigError):
            validate_kernel_spec(spec)


class TestOptimSpec:
    def test_t0_defaults_to_quarter_of_iterations(self):
        assert OptimSpec(iterations=500).t0 == 125
        assert OptimSpec(iterations=2).t0 == 1

    def test_explicit_t0_kept(self):
        assert OptimSpec(iterations=500, t0=50).t0 == 50

    def test_zero_lr_allowed_negative_rejected(self):
        assert OptimSpec(lr=0.0).lr == 0.0
        with pytest.raises(ConfigError):
            OptimSpec(lr=-1e-4)

    def test_bad_batch(self):
        with pytest.raises(ConfigError):
            OptimSpec(batch_size=0)


class TestLossSpec:
    def test_terms_normalized(self):
        spec = LossSpec(terms=(("L1", 1.0), ("SSIM", 0.5)))
        assert spec.terms == (("l1", 1.0), ("ssim", 0.5))

    def test_zero_total_weight_rejected(self):
        with pytest.raises(ConfigError):
            LossSpec(terms=(("l1", 0.0),))

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError):
            LossSpec(terms=(("l2", 1.0),))

    def test_even_window_rejected(self):
        with pytest.raises(ConfigError):
            LossSpec(window=10)

    def test_with_data_range_returns_copy(self):
        spec = LossSpec()
        wide = spec.with_data_range(40.0)
        assert wide.data_range == 40.0
        assert spec.data_range == 1.0


class TestRunConfig:
    def test_unknown_keys_rejected_everywhere(self):
        with pytest.raises(ConfigError):
            run_config_from_dict({"network": {"scale": 4, "bogus": 1}})
        with pytest.raises(ConfigError):
            run_config_from_dict({"bogus": 1})
        with pytest.raises(ConfigError):
            run_config_from_dict({"optim": {"lr": 1e-4, "momentum": 0.9}})

    def test_invalid_normalization(self):
        with pytest.raises(ConfigError):
            RunConfig(normalization="robust")

    def test_yaml_round_trip(self, tmp_path):
        cfg = RunConfig(
            network=NetworkConfig(scale=4, stages=3, base_dim=16,
                                  variant_sequence=("ss", "cs", "baseline"),
                                  kernel_spec=((3, 1), (5, 2))),
            optim=OptimSpec(lr=3e-4, iterations=40),
            loss=LossSpec(terms=(("l1", 0.7), ("ssim", 0.3))),
            data="d", output_dir="o", seed=9, normalization="minmax", val_every=10,
        )
        path = tmp_path / "run.yaml"
        save_resolved_config(cfg, path)
        again = load_run_config(path)
        assert again == cfg

    def test_round_trip_dict_is_plain_yaml(self):
        doc = run_config_to_dict(RunConfig())
        assert yaml.safe_load(yaml.safe_dump(doc)) == doc

    def test_malformed_yaml_raises_config_error(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("network: [unclosed\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_run_config(path)

    def test_sections_are_optional(self):
        cfg = run_config_from_dict({"seed": 3})
        assert cfg.seed == 3
        assert cfg.network == NetworkConfig()

    def test_resolved_snapshot_has_no_nulls_for_variants(self, tmp_path):
        path = tmp_path / "snap.yaml"
        save_resolved_config(RunConfig(), path)
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
        assert doc["network"]["variant_sequence"] == ["mocolsk-ss"] * 4

    def test_dataclasses_are_comparable(self):
        assert RunConfig() == RunConfig()
        assert dataclasses.asdict(OptimSpec())["t0"] == 125
