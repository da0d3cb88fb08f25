"""Finite-difference gradient audit for the learnable blocks.

Each named case builds a micro instance of one block at float64, compares
autograd against central differences on a seeded subsample of elements of
every parameter and input tensor, and reports the per-tensor relative
error.  The scalar under test is a fixed random projection of the outputs,
so every output element influences the check.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .blocks import DownProjection, DynamicMLP, ResidualGroup, UpProjection
from .config import NetworkConfig
from .errors import ConfigError
from .fusion import (
    LargeKernelBranches,
    ModalityWeightGenerator,
    MoCoLSKModule,
    per_sample_conv,
    spatial_descriptor,
)
from .network import build_network


class _SpatialSelect(nn.Module):
    """Parameter-free selection pipeline: descriptor, per-sample conv, gate, merge."""

    def forward(self, u1, u2, weights):
        masks = torch.sigmoid(per_sample_conv(spatial_descriptor(u1, u2), weights))
        return masks[:, 0:1] * u1 + masks[:, 1:2] * u2


def _micro_network():
    cfg = NetworkConfig(
        scale=2, stages=2, base_dim=8, blocks_per_group=1,
        attention_reduction=4, guidance_channels=3, dmlp_hidden=8,
    )
    net = build_network(cfg, seed=0)
    return net, (torch.randn(1, 1, 12, 12), torch.randn(1, 3, 24, 24))


CASES = {
    "linear": lambda: (nn.Linear(5, 3), (torch.randn(2, 5),)),
    "residual_group": lambda: (ResidualGroup(8, blocks=1), (torch.randn(2, 8, 7, 7),)),
    "up_projection": lambda: (UpProjection(6, 2), (torch.randn(2, 6, 5, 5),)),
    "down_projection": lambda: (DownProjection(10, 6, 2), (torch.randn(2, 10, 10, 10),)),
    "dynamic_mlp_a": lambda: (
        DynamicMLP(12, 10, 6, hidden=8, layers=2, version="A"),
        (torch.randn(3, 12), torch.randn(3, 10)),
    ),
    "dynamic_mlp_b": lambda: (
        DynamicMLP(12, 10, 6, hidden=8, layers=2, version="B"),
        (torch.randn(3, 12), torch.randn(3, 10)),
    ),
    "dynamic_mlp_c": lambda: (
        DynamicMLP(12, 10, 6, hidden=8, layers=2, version="C"),
        (torch.randn(3, 12), torch.randn(3, 10)),
    ),
    "large_kernel_decompose": lambda: (
        LargeKernelBranches(6, 4, ((5, 1), (7, 3))),
        (torch.randn(2, 6, 9, 9),),
    ),
    "spatial_kernel_select": lambda: (
        _SpatialSelect(),
        (torch.randn(2, 4, 8, 8), torch.randn(2, 4, 8, 8), torch.randn(2, 2, 2, 3, 3)),
    ),
    "mcwg_weights": lambda: (
        ModalityWeightGenerator(6, 4, 3, hidden=8),
        (torch.randn(2, 6, 8, 8), torch.randn(2, 4, 8, 8)),
    ),
    "mocolsk_forward": lambda: (
        MoCoLSKModule(6, 4, 8, 2, dmlp_hidden=8),
        (torch.randn(2, 6, 6, 6), torch.randn(2, 4, 12, 12)),
    ),
    "network": _micro_network,
}

# Per-case pass thresholds; the end-to-end case is looser because thousands
# of float32-designed ops run in sequence even at float64.
DEFAULT_TOLERANCES = {name: 1e-4 for name in CASES}
DEFAULT_TOLERANCES["network"] = 1e-3


@dataclass
class TensorCheck:
    name: str
    rel_err: float
    checked: int


@dataclass
class CaseReport:
    case: str
    entries: list[TensorCheck]
    tolerance: float

    @property
    def max_rel_err(self) -> float:
        return max((e.rel_err for e in self.entries), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance

    def worst(self, k: int = 5) -> list[TensorCheck]:
        return sorted(self.entries, key=lambda e: e.rel_err, reverse=True)[:k]

    def format(self) -> str:
        status = "ok" if self.passed else "FAIL"
        lines = [
            f"{self.case}: max rel err {self.max_rel_err:.3e} "
            f"(tolerance {self.tolerance:.0e}) {status}"
        ]
        for e in self.worst():
            lines.append(f"  {e.rel_err:.3e}  {e.name}  ({e.checked} elements)")
        return "\n".join(lines)


def build_case(module_id: str, seed: int = 0):
    if module_id not in CASES:
        raise ConfigError(f"unknown gradcheck case {module_id!r}; valid: {sorted(CASES)}")
    torch.manual_seed(seed)
    module, inputs = CASES[module_id]()
    return module, inputs


def _scalar(module, inputs, projections):
    out = module(*inputs)
    outs = (out,) if isinstance(out, torch.Tensor) else tuple(out)
    total = None
    for o, p in zip(outs, projections):
        term = (o * p).sum()
        total = term if total is None else total + term
    return total


def check_gradients(
    module: nn.Module,
    inputs,
    *,
    case: str = "module",
    # Central differences in float64: step small enough that LeakyReLU kink
    # crossings are rare, large enough that cancellation stays ~1e-10.
    eps: float = 1e-6,
    seed: int = 0,
    max_elements: int = 16,
    tolerance: float = 1e-4,
) -> CaseReport:
    module = module.double()
    inputs = [t.detach().double().requires_grad_(True) for t in inputs]

    out = module(*inputs)
    outs = (out,) if isinstance(out, torch.Tensor) else tuple(out)
    gen = torch.Generator().manual_seed(seed)
    projections = [
        torch.randn(o.shape, generator=gen, dtype=torch.float64) for o in outs
    ]

    leaves = [(f"input:{i}", t) for i, t in enumerate(inputs)]
    leaves += [(f"param:{n}", p) for n, p in module.named_parameters()]
    value = _scalar(module, inputs, projections)
    analytic = torch.autograd.grad(value, [t for _, t in leaves], allow_unused=True)

    rng = np.random.default_rng(seed)
    entries = []
    with torch.no_grad():
        for (name, tensor), grad in zip(leaves, analytic):
            flat = tensor.reshape(-1)
            n = flat.numel()
            idxs = rng.choice(n, size=min(max_elements, n), replace=False)
            agrad = (
                torch.zeros(n, dtype=torch.float64) if grad is None else grad.reshape(-1)
            )
            numeric = np.zeros(len(idxs))
            for j, idx in enumerate(idxs):
                orig = flat[idx].item()
                flat[idx] = orig + eps
                plus = _scalar(module, inputs, projections).item()
                flat[idx] = orig - eps
                minus = _scalar(module, inputs, projections).item()
                flat[idx] = orig
                numeric[j] = (plus - minus) / (2.0 * eps)
            sampled = agrad[idxs].numpy()
            denom = max(np.abs(sampled).max(), np.abs(numeric).max(), 1e-3)
            rel = float(np.abs(sampled - numeric).max() / denom)
            entries.append(TensorCheck(name, rel, len(idxs)))
    return CaseReport(case, entries, tolerance)


def run_case(
    module_id: str,
    *,
    eps: float = 1e-6,
    seed: int = 0,
    max_elements: int = 16,
    tolerance: float | None = None,
) -> CaseReport:
    module, inputs = build_case(module_id, seed)
    if module_id == "network":
        max_elements = min(max_elements, 8)
    return check_gradients(
        module, inputs,
        case=module_id, eps=eps, seed=seed, max_elements=max_elements,
        tolerance=tolerance if tolerance is not None else DEFAULT_TOLERANCES[module_id],
    )


def run_suite(
    module_ids=None, *, eps: float = 1e-6, seed: int = 0, max_elements: int = 16
) -> list[CaseReport]:
    ids = list(module_ids) if module_ids else sorted(CASES)
    return [run_case(i, eps=eps, seed=seed, max_elements=max_elements) for i in ids]
