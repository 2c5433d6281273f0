"""Multi-pass translation: rewrite loop, stopping rule and selection policies."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .base import RewriterEvaluator
from .bleu import CORPUS, corpus_bleu, sentence_bleu
from .errors import ContractViolation

NEG_INF = float("-inf")
MODES = ("threshold", "argmax", "oracle", "fixed")


@dataclass(frozen=True)
class StoppingPolicy:
    mode: str = "threshold"
    delta: float = 0.01
    max_k: int = 4
    k: int | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ContractViolation(f"unknown policy {self.mode!r}")
        if self.max_k < 1:
            raise ContractViolation("max_k must be >= 1")
        if self.mode == "threshold" and self.delta < 0:
            raise ContractViolation("delta must be non-negative")
        if self.mode == "fixed" and (self.k is None or not 1 <= self.k <= self.max_k):
            raise ContractViolation("fixed policy needs 1 <= k <= max_k")

    @classmethod
    def parse(cls, text: str, delta: float = 0.01, max_k: int = 4) -> "StoppingPolicy":
        """``threshold``, ``argmax``, ``oracle`` or ``fixed:<k>``."""
        if text.startswith("fixed:"):
            try:
                k = int(text.split(":", 1)[1])
            except ValueError:
                raise ContractViolation(f"bad policy {text!r}") from None
            return cls("fixed", delta, max_k, k)
        return cls(text, delta, max_k)

    @property
    def passes(self) -> int:
        """Rewriting passes this policy may need."""
        return self.k if self.mode == "fixed" else self.max_k

    def __str__(self) -> str:
        return f"fixed:{self.k}" if self.mode == "fixed" else self.mode


@dataclass
class RewriteTrace:
    """Drafts z^(1..k_stop) with their evaluator scores and the selection made."""

    drafts: list[tuple[str, ...]]
    scores: list[float]
    stop_reason: str = "max-passes"
    chosen: int = 1
    fixed_points: list[bool] = field(default_factory=list)

    @property
    def k_stop(self) -> int:
        return len(self.drafts)

    @property
    def final(self) -> tuple[str, ...]:
        return self.drafts[self.chosen - 1]


def threshold_decision(scores: Sequence[float], delta: float) -> tuple[int, int, str]:
    """Apply the stopping rule to a score sequence.

    Returns ``(k_stop, chosen, reason)``: the first k with
    ``q_k + delta < q_{k-1}`` stops the loop and selects k - 1; otherwise
    the last draft is accepted.  ``q_0`` is minus infinity.
    """
    prev = NEG_INF
    for k, q in enumerate(scores, start=1):
        if q + delta < prev:
            return k, k - 1, "threshold"
        prev = q
    return len(scores), len(scores), "max-passes"


def _first_argmax(values: Sequence[float]) -> int:
    return int(np.argmax(np.asarray(values, dtype=np.float64))) + 1


def select(
    drafts: Sequence[Sequence[str]],
    scores: Sequence[float],
    policy: StoppingPolicy,
    reference: Sequence[str] | None = None,
) -> RewriteTrace:
    """Choose a draft from a full trace of ``policy.passes`` drafts.

    Threshold mode truncates the trace where the rule fires; the other
    modes keep every pass.  Ties go to the earliest pass.
    """
    drafts = [tuple(z) for z in drafts]
    scores = [float(q) for q in scores]
    if not drafts or len(drafts) != len(scores):
        raise ContractViolation("trace needs one score per draft")
    fixed = [k > 0 and drafts[k] == drafts[k - 1] for k in range(len(drafts))]
    mode = policy.mode
    if mode == "threshold":
        k_stop, chosen, reason = threshold_decision(scores, policy.delta)
        return RewriteTrace(drafts[:k_stop], scores[:k_stop], reason, chosen, fixed[:k_stop])
    if mode == "argmax":
        chosen = _first_argmax(scores)
    elif mode == "oracle":
        if reference is None:
            raise ContractViolation("oracle selection needs a reference")
        chosen = _first_argmax([sentence_bleu(z, reference).value for z in drafts])
    else:
        if policy.k > len(drafts):
            raise ContractViolation(f"trace has {len(drafts)} passes, fixed:{policy.k} needs more")
        chosen = policy.k
    return RewriteTrace(drafts, scores, "max-passes", chosen, fixed)


def rewrite_passes(
    model: RewriterEvaluator,
    xs: Sequence[Sequence[str]],
    passes: int,
    beam_size: int = 4,
    delta: float | None = None,
    batch_size: int = 64,
) -> tuple[list[list[tuple[str, ...]]], list[list[float]]]:
    """Run the rewrite loop from the empty draft, scoring every pass.

    With ``delta`` set, a sentence leaves the loop as soon as the stopping
    rule fires; otherwise all ``passes`` drafts are produced.
    """
    n = len(xs)
    drafts: list[list[tuple[str, ...]]] = [[] for _ in range(n)]
    scores: list[list[float]] = [[] for _ in range(n)]
    live = list(range(n))
    for _ in range(passes):
        if not live:
            break
        for i in range(0, len(live), batch_size):
            rows = live[i : i + batch_size]
            src = [xs[r] for r in rows]
            prev = [drafts[r][-1] if drafts[r] else () for r in rows]
            new = [tuple(h.tokens) for h in model.rewrite(src, prev, beam_size)]
            qs = model.evaluate(src, new)
            for r, z, q in zip(rows, new, qs):
                drafts[r].append(z)
                scores[r].append(float(q))
        if delta is not None:
            live = [r for r in live if threshold_decision(scores[r], delta)[2] != "threshold"]
    return drafts, scores


def translate(
    model: RewriterEvaluator,
    xs: Sequence[Sequence[str]],
    policy: StoppingPolicy,
    refs: Sequence[Sequence[str]] | None = None,
    beam_size: int = 4,
) -> list[RewriteTrace]:
    """Translate every source under ``policy``; ``trace.final`` is the output."""
    if policy.mode == "oracle" and refs is None:
        raise ContractViolation("oracle selection needs references")
    if any(len(x) == 0 for x in xs):
        raise ContractViolation("empty source sentence")
    delta = policy.delta if policy.mode == "threshold" else None
    drafts, scores = rewrite_passes(model, xs, policy.passes, beam_size, delta)
    return [
        select(d, s, policy, None if refs is None else refs[i]) for i, (d, s) in enumerate(zip(drafts, scores))
    ]


@dataclass
class PolicyReport:
    """Corpus BLEU per policy plus the per-pass curve, from one set of traces."""

    bleu: dict[str, float]
    per_pass: list[float]
    traces: dict[str, list[RewriteTrace]]
    mean_chosen: dict[str, float]

    def rows(self) -> list[tuple[str, float, float]]:
        return [(name, self.bleu[name], self.mean_chosen[name]) for name in self.bleu]


def evaluate_policies(
    model: RewriterEvaluator,
    xs: Sequence[Sequence[str]],
    refs: Sequence[Sequence[str]],
    max_k: int,
    delta: float = 0.01,
    beam_size: int = 4,
) -> PolicyReport:
    """Score fixed-k, argmax, threshold and oracle selection on shared traces."""
    drafts, scores = rewrite_passes(model, xs, max_k, beam_size)
    policies = [StoppingPolicy("fixed", delta, max_k, k) for k in range(1, max_k + 1)]
    policies += [
        StoppingPolicy("argmax", delta, max_k),
        StoppingPolicy("threshold", delta, max_k),
        StoppingPolicy("oracle", delta, max_k),
    ]
    bleu, traces, mean_chosen = {}, {}, {}
    for p in policies:
        ts = [select(d, s, p, y) for d, s, y in zip(drafts, scores, refs)]
        name = str(p)
        traces[name] = ts
        bleu[name] = corpus_bleu([(t.final, y) for t, y in zip(ts, refs)], CORPUS).value
        mean_chosen[name] = float(np.mean([t.chosen for t in ts]))
    per_pass = [bleu[f"fixed:{k}"] for k in range(1, max_k + 1)]
    return PolicyReport(bleu, per_pass, traces, mean_chosen)


def format_line(trace: RewriteTrace) -> str:
    """final translation, stop reason, chosen k, q-values; tab-separated."""
    qs = " ".join(repr(q) for q in trace.scores)
    return "\t".join([" ".join(trace.final), trace.stop_reason, str(trace.chosen), qs])


def parse_line(line: str) -> tuple[list[str], str, int, list[float]]:
    parts = line.rstrip("\n").split("\t")
    if len(parts) != 4:
        raise ValueError(f"expected 4 tab-separated fields, got {len(parts)}")
    return parts[0].split(), parts[1], int(parts[2]), [float(q) for q in parts[3].split()]
