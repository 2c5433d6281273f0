"""RMSProp over named parameters."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .autodiff import Tensor
from .errors import ShapeError


@dataclass
class RmsPropState:
    lr: float = 1e-3
    decay: float = 0.9
    eps: float = 1e-8
    mean_sq: dict[str, np.ndarray] = field(default_factory=dict)
    steps: int = 0


def rmsprop_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray | None],
    state: RmsPropState,
) -> None:
    """In-place update ``p -= lr * g / sqrt(mean_sq + eps)``.

    A missing gradient counts as zero: the parameter stays put while its
    running mean keeps decaying.
    """
    d = state.decay
    for name, p in params.items():
        g = grads.get(name)
        ms = state.mean_sq.get(name)
        if ms is None:
            ms = np.zeros_like(p.data)
        if g is None:
            state.mean_sq[name] = d * ms
            continue
        if g.shape != p.data.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, expected {p.data.shape}")
        ms = d * ms + (1.0 - d) * g * g
        state.mean_sq[name] = ms
        p.data = p.data - state.lr * g / np.sqrt(ms + state.eps)
    state.steps += 1


class RMSProp:
    def __init__(self, params: Mapping[str, Tensor], lr=1e-3, decay=0.9, eps=1e-8, clip_norm=None):
        self.params = dict(params)
        self.state = RmsPropState(lr=lr, decay=decay, eps=eps)
        self.clip_norm = clip_norm

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def grad_norm(self) -> float:
        return float(np.sqrt(sum(float((p.grad**2).sum()) for p in self.params.values() if p.grad is not None)))

    def step(self) -> None:
        grads = {n: p.grad for n, p in self.params.items()}
        if self.clip_norm is not None:
            norm = self.grad_norm()
            if norm > self.clip_norm:
                k = self.clip_norm / norm
                grads = {n: None if g is None else g * k for n, g in grads.items()}
        rmsprop_step(self.params, grads, self.state)
