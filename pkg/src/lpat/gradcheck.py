"""Central finite-difference verification of the reverse-mode adjoints."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .autodiff import Graph, Tensor, backward
from .errors import ContractError, InstabilityError


@dataclass
class ParamCheck:
    """Worst relative error seen over one parameter tensor."""
    name: str
    max_rel_err: float
    worst_index: int


def _eval_scalar(f: Callable[[], Tensor]) -> float:
    out = f()
    if isinstance(out, Tensor):
        if out.size != 1:
            raise ContractError(f"function output is not scalar: {out.shape}")
        return out.item()
    return float(out)


def finite_difference_report(f: Callable[[], Tensor],
                             params: Mapping[str, Tensor],
                             eps: float = 1e-6) -> list[ParamCheck]:
    """Compare reverse-mode gradients of ``f`` against central differences.

    ``f`` is re-evaluated with each parameter entry perturbed in place by
    +/- eps; parameters must be float64 leaves.  Relative error per entry
    is |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|).
    """
    for name, p in params.items():
        if p.dtype != np.float64:
            raise ContractError(f"{name}: gradient checks require float64")
        if p.node is not None:
            raise ContractError(f"{name}: parameters must be leaf tensors")

    with Graph() as g:
        loss = f()
    if not isinstance(loss, Tensor) or loss.size != 1:
        raise ContractError("f must return a scalar Tensor")
    if not math.isfinite(loss.item()):
        raise InstabilityError("f is non-finite at the base point")
    grads = backward(g, loss)

    reports = []
    for name, p in params.items():
        g_ad = grads.get(p)
        if g_ad is None:
            g_ad = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gflat = g_ad.reshape(-1)
        worst, worst_i = 0.0, 0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = _eval_scalar(f)
            flat[i] = orig - eps
            f_minus = _eval_scalar(f)
            flat[i] = orig
            if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                raise InstabilityError(
                    f"non-finite value while perturbing {name}[{i}]",
                    param_name=name, index=i)
            g_fd = (f_plus - f_minus) / (2.0 * eps)
            err = abs(gflat[i] - g_fd) / max(1e-8, abs(gflat[i]) + abs(g_fd))
            if err > worst:
                worst, worst_i = err, i
        reports.append(ParamCheck(name, worst, worst_i))
    return reports


def finite_difference_check(f: Callable[[], Tensor],
                            params: Mapping[str, Tensor],
                            eps: float = 1e-6) -> float:
    """Maximum relative error over every entry of every parameter."""
    reports = finite_difference_report(f, params, eps)
    return max((r.max_rel_err for r in reports), default=0.0)
