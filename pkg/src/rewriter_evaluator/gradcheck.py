"""Central finite-difference verification of autodiff gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .autodiff import Tensor, backward, no_grad


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_param: dict[str, float] = field(default_factory=dict)
    tolerance: float | None = None

    @property
    def passed(self) -> bool:
        return self.tolerance is None or self.max_rel_error <= self.tolerance


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def numeric_grad(loss_fn: Callable[[], Tensor], p: Tensor, step: float = 1e-5) -> np.ndarray:
    out = np.zeros_like(p.data)
    flat = p.data.reshape(-1)
    gflat = out.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = loss_fn().item()
            flat[i] = orig - step
            down = loss_fn().item()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * step)
    return out


def gradient_check(
    loss_fn: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    tolerance: float | None = None,
    step: float = 1e-5,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare backward() against central differences for every parameter.

    ``loss_fn`` must rebuild the scalar loss from the current parameter
    values on each call.
    """
    for p in params.values():
        p.grad = None
    backward(loss_fn())
    errors = {}
    for name, p in params.items():
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        errors[name] = relative_error(analytic, numeric_grad(loss_fn, p, step), floor)
    worst = max(errors.values(), default=0.0)
    return GradCheckReport(worst, errors, tolerance)
