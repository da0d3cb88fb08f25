import pytest

from mocolsk.errors import ConfigError
from mocolsk.gradcheck import CASES, DEFAULT_TOLERANCES, build_case, run_case


def test_case_registry_is_complete():
    expected = {
        "linear", "residual_group", "up_projection", "down_projection",
        "dynamic_mlp_a", "dynamic_mlp_b", "dynamic_mlp_c",
        "large_kernel_decompose", "spatial_kernel_select", "mcwg_weights",
        "mocolsk_forward", "network",
    }
    assert set(CASES) == expected
    assert DEFAULT_TOLERANCES["network"] == 1e-3
    assert all(DEFAULT_TOLERANCES[n] == 1e-4 for n in CASES if n != "network")


@pytest.mark.parametrize("name", ["linear", "residual_group", "dynamic_mlp_a"])
def test_cheap_cases_pass(name):
    report = run_case(name, seed=0)
    assert report.passed, report.format()
    assert report.max_rel_err < DEFAULT_TOLERANCES[name]


def test_unknown_case_rejected():
    with pytest.raises(ConfigError):
        build_case("nonexistent")
    with pytest.raises(ConfigError):
        run_case("nonexistent")


def test_report_format_mentions_case_and_error():
    report = run_case("linear", seed=0)
    text = report.format()
    assert "linear" in text
    assert "max rel err" in text


def test_broken_gradient_is_caught():
    import torch

    from mocolsk.gradcheck import check_gradients

    class BadGrad(torch.nn.Module):
        def __init__(self):
            super().__init__()
            self.w = torch.nn.Parameter(torch.randn(4, 4, dtype=torch.float64))

        def forward(self, x):
            # Detach half the path so autograd disagrees with finite differences.
            return x @ self.w + (x * self.w.detach()).sum()

    torch.manual_seed(0)
    module = BadGrad()
    inputs = [torch.randn(4, 4, dtype=torch.float64)]
    report = check_gradients(module, inputs, case="badgrad", seed=0)
    assert report.max_rel_err > 1e-2
    assert not report.passed
