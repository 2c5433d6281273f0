"""Synthetic parallel corpora for desk-scale transduction experiments.

Three tasks are available.  Each draws a clean token sequence without
adjacent repeats, derives the reference from it, and corrupts only the
source side by duplicating tokens in place.  Because clean sequences never
repeat a token adjacently, collapsing runs in the source recovers the clean
sequence exactly, so every task has an exact oracle.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractViolation
from .vocab import RESERVED, Vocabulary

TASKS = ("noisy-reversal", "substitution-cipher", "sort-tokens")

Pair = tuple[list[str], list[str]]


class CorpusFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TaskSpec:
    kind: str = "noisy-reversal"
    vocab_size: int = 64
    min_len: int = 3
    max_len: int = 10
    noise_rate: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in TASKS:
            raise ContractViolation(f"unknown task {self.kind!r}; choose from {', '.join(TASKS)}")
        if self.vocab_size < 8:
            raise ContractViolation("vocab_size must be >= 8")
        if not 0.0 <= self.noise_rate < 0.5:
            raise ContractViolation("noise_rate must lie in [0, 0.5)")
        if not 3 <= self.min_len <= self.max_len <= 20:
            raise ContractViolation("length range must lie within [3, 20]")


@dataclass
class ParallelCorpus:
    pairs: list[Pair] = field(default_factory=list)
    split: str = "all"

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __getitem__(self, i):
        return self.pairs[i]

    @property
    def sources(self) -> list[list[str]]:
        return [s for s, _ in self.pairs]

    @property
    def references(self) -> list[list[str]]:
        return [r for _, r in self.pairs]


def token_names(vocab_size: int) -> list[str]:
    width = max(3, len(str(vocab_size - 1)))
    return [f"t{i:0{width}d}" for i in range(vocab_size)]


def _cipher(spec: TaskSpec) -> dict[str, str]:
    names = token_names(spec.vocab_size)
    perm = np.random.default_rng([spec.seed, 0xC1]).permutation(len(names))
    return {a: names[j] for a, j in zip(names, perm)}


def _collapse_runs(tokens: Sequence[str]) -> list[str]:
    out: list[str] = []
    for t in tokens:
        if not out or out[-1] != t:
            out.append(t)
    return out


def transform(spec: TaskSpec, clean: Sequence[str]) -> list[str]:
    """Reference for a clean source sequence."""
    if spec.kind == "noisy-reversal":
        return list(reversed(clean))
    if spec.kind == "substitution-cipher":
        table = _cipher(spec)
        return [table[t] for t in clean]
    return sorted(clean)


def oracle(spec: TaskSpec, source: Sequence[str]) -> list[str]:
    """Exact solver: undo the duplication noise, then apply the task."""
    return transform(spec, _collapse_runs(source))


def generate(spec: TaskSpec, n: int) -> ParallelCorpus:
    if n < 1:
        raise ContractViolation("n must be >= 1")
    rng = np.random.default_rng(spec.seed)
    names = token_names(spec.vocab_size)
    pairs: list[Pair] = []
    for _ in range(n):
        length = int(rng.integers(spec.min_len, spec.max_len + 1))
        idx = [int(rng.integers(len(names)))]
        while len(idx) < length:
            j = int(rng.integers(len(names) - 1))
            # skip the previous index so no token repeats adjacently
            idx.append(j if j < idx[-1] else j + 1)
        clean = [names[i] for i in idx]
        noisy: list[str] = []
        for t in clean:
            noisy.append(t)
            if rng.random() < spec.noise_rate:
                noisy.append(t)
        pairs.append((noisy, transform(spec, clean)))
    return ParallelCorpus(pairs)


def split_of(index: int) -> str:
    bucket = int(hashlib.sha256(str(index).encode()).hexdigest(), 16) % 10
    return "train" if bucket < 8 else ("dev" if bucket == 8 else "test")


def split(corpus: ParallelCorpus) -> dict[str, ParallelCorpus]:
    """80/10/10 train/dev/test split keyed on a hash of the pair index."""
    out = {name: ParallelCorpus([], name) for name in ("train", "dev", "test")}
    for i, pair in enumerate(corpus.pairs):
        out[split_of(i)].pairs.append(pair)
    return out


def save(corpus: ParallelCorpus, path) -> None:
    with open(path, "w") as fh:
        for src, ref in corpus.pairs:
            fh.write(json.dumps({"src": list(src), "ref": list(ref)}) + "\n")


def load(path, split_name: str = "all") -> ParallelCorpus:
    pairs: list[Pair] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                src, ref = obj["src"], obj["ref"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorpusFormatError(f"{path}:{lineno}: malformed corpus line ({exc})") from None
            if not (isinstance(src, list) and isinstance(ref, list)) or not all(
                isinstance(t, str) for t in [*src, *ref]
            ):
                raise CorpusFormatError(f"{path}:{lineno}: src/ref must be arrays of strings")
            if not ref:
                raise CorpusFormatError(f"{path}:{lineno}: empty reference")
            pairs.append((src, ref))
    if not pairs:
        raise CorpusFormatError(f"{path}: corpus is empty")
    return ParallelCorpus(pairs, split_name)


def build_vocab(corpus: ParallelCorpus | Iterable[Pair], max_size: int) -> Vocabulary:
    """Keep the most frequent tokens; ties broken lexicographically."""
    pairs = corpus.pairs if isinstance(corpus, ParallelCorpus) else list(corpus)
    if not pairs:
        raise ContractViolation("cannot build a vocabulary from an empty corpus")
    counts: Counter = Counter()
    for src, ref in pairs:
        counts.update(src)
        counts.update(ref)
    for r in RESERVED:
        counts.pop(r, None)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    keep = max(max_size - len(RESERVED), 0)
    return Vocabulary(tok for tok, _ in ranked[:keep])
