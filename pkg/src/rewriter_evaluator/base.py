"""Backbone-independent decoding and scoring helpers."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .autodiff import Tensor, no_grad
from .decoding import Hypothesis, beam_decode, greedy_decode
from .nn import Module


def default_max_len(x: Sequence[str]) -> int:
    return 2 * len(x) + 2


class RewriterEvaluator(Module):
    """Shared surface of both backbones.

    Subclasses provide ``session``, ``rewrite_losses``, ``scores`` and
    ``training_losses``; decoding and convenience wrappers live here.
    """

    backbone = "abstract"

    def session(self, xs, drafts):
        raise NotImplementedError

    def rewrite_losses(self, xs, drafts, ys) -> Tensor:
        raise NotImplementedError

    def scores(self, xs, zs) -> Tensor:
        raise NotImplementedError

    def training_losses(self, xs, prev_drafts, ys, new_drafts):
        raise NotImplementedError

    def rewrite_loss(self, x, z_prev, y) -> Tensor:
        return self.rewrite_losses([x], [z_prev], [y])[0]

    def greedy_decode(self, xs, drafts, max_len: int | None = None) -> list[Hypothesis]:
        limits = [max_len or default_max_len(x) for x in xs]
        return greedy_decode(self.session(xs, drafts), limits)

    def beam_decode(self, x, draft, beam_size: int, max_len: int | None = None) -> Hypothesis:
        limit = max_len or default_max_len(x)
        return beam_decode(lambda: self.session([x], [draft]), beam_size, limit)

    def rewrite(self, xs, drafts, beam_size: int = 1, max_len: int | None = None) -> list[Hypothesis]:
        if beam_size == 1:
            return self.greedy_decode(xs, drafts, max_len)
        return [self.beam_decode(x, z, beam_size, max_len) for x, z in zip(xs, drafts)]

    def evaluate(self, xs, zs) -> np.ndarray:
        """Evaluator scores without recording gradients."""
        with no_grad():
            return self.scores(xs, zs).data.copy()
