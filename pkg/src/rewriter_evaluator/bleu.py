"""Clipped n-gram BLEU at sentence and corpus level, scores in [0, 1]."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import ContractViolation


@dataclass(frozen=True)
class BleuConfig:
    max_n: int = 4
    smoothing: bool = True
    case_sensitive: bool = True

    def __post_init__(self):
        if self.max_n < 1:
            raise ContractViolation("max_n must be >= 1")


SENTENCE = BleuConfig(smoothing=True)
CORPUS = BleuConfig(smoothing=False)


@dataclass
class BleuScore:
    value: float
    precisions: list[float] = field(default_factory=list)
    brevity_penalty: float = 0.0
    matches: list[int] = field(default_factory=list)
    totals: list[int] = field(default_factory=list)
    candidate_length: int = 0
    reference_length: int = 0

    def __float__(self) -> float:
        return self.value


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _stats(candidate, reference, cfg: BleuConfig):
    if not reference:
        raise ContractViolation("reference must be non-empty")
    if not cfg.case_sensitive:
        candidate = [t.lower() for t in candidate]
        reference = [t.lower() for t in reference]
    matches, totals = [], []
    for n in range(1, cfg.max_n + 1):
        cand, ref = ngrams(candidate, n), ngrams(reference, n)
        matches.append(sum(min(c, ref[g]) for g, c in cand.items()))
        totals.append(max(len(candidate) - n + 1, 0))
    return matches, totals, len(candidate), len(reference)


def _combine(matches, totals, c_len, r_len, cfg: BleuConfig) -> BleuScore:
    if c_len == 0:
        return BleuScore(0.0, [0.0] * cfg.max_n, 0.0, matches, totals, 0, r_len)
    precisions = []
    for n, (m, t) in enumerate(zip(matches, totals), start=1):
        if cfg.smoothing and n > 1:
            precisions.append((m + 1) / (t + 1))
        else:
            precisions.append(m / t if t else 0.0)
    bp = 1.0 if c_len > r_len else math.exp(1.0 - r_len / c_len)
    if min(precisions) <= 0.0:
        value = 0.0
    else:
        value = bp * math.exp(sum(math.log(p) for p in precisions) / cfg.max_n)
    return BleuScore(value, precisions, bp, list(matches), list(totals), c_len, r_len)


def sentence_bleu(candidate: Sequence[str], reference: Sequence[str], cfg: BleuConfig = SENTENCE) -> BleuScore:
    """BLEU of one candidate; add-one smoothing on n > 1 precisions by default.

    An empty candidate scores 0.0; an empty reference is rejected.
    """
    return _combine(*_stats(candidate, reference, cfg), cfg)


def corpus_bleu(pairs: Iterable[tuple[Sequence[str], Sequence[str]]], cfg: BleuConfig = CORPUS) -> BleuScore:
    """Corpus BLEU from n-gram counts and lengths summed over all pairs."""
    pairs = list(pairs)
    if not pairs:
        raise ContractViolation("corpus_bleu needs at least one pair")
    matches = [0] * cfg.max_n
    totals = [0] * cfg.max_n
    c_len = r_len = 0
    for cand, ref in pairs:
        m, t, c, r = _stats(cand, ref, cfg)
        matches = [a + b for a, b in zip(matches, m)]
        totals = [a + b for a, b in zip(totals, t)]
        c_len += c
        r_len += r
    return _combine(matches, totals, c_len, r_len, cfg)
