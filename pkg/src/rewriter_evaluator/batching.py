"""Padding and copy/gold lookup tables shared by both backbones."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .vocab import Vocabulary


def pad(seqs: Sequence[Sequence[int]], pad_id: int = 0, min_len: int = 1) -> tuple[np.ndarray, np.ndarray]:
    T = max(min_len, max((len(s) for s in seqs), default=0))
    ids = np.full((len(seqs), T), pad_id, dtype=np.int64)
    mask = np.zeros((len(seqs), T))
    for b, s in enumerate(seqs):
        ids[b, : len(s)] = s
        mask[b, : len(s)] = 1.0
    return ids, mask


@dataclass
class CopyTable:
    """Where copyable draft tokens live inside a (B, T) row grid.

    ``mask[b, j]`` is 1 at positions holding draft tokens.  ``ext_ids`` maps
    each position to an extended id (``len(V) + k`` for the k-th distinct
    out-of-vocabulary token of row b).  ``oov[b]`` lists those tokens.
    """

    tokens: list[list[str]]
    mask: np.ndarray
    ext_ids: np.ndarray
    oov: list[list[str]]
    offset: int

    @property
    def has_copy(self) -> np.ndarray:
        return self.mask.any(axis=1)

    @property
    def n_ext(self) -> int:
        return max((len(o) for o in self.oov), default=0)

    def select(self, rows: np.ndarray) -> "CopyTable":
        return CopyTable(
            [self.tokens[r] for r in rows],
            self.mask[rows],
            self.ext_ids[rows],
            [self.oov[r] for r in rows],
            self.offset,
        )


def copy_table(drafts: Sequence[Sequence[str]], vocab: Vocabulary, width: int, offset: int) -> CopyTable:
    B = len(drafts)
    mask = np.zeros((B, width))
    ext = np.zeros((B, width), dtype=np.int64)
    oov: list[list[str]] = []
    V = len(vocab)
    for b, z in enumerate(drafts):
        row_oov: list[str] = []
        for j, tok in enumerate(z):
            if tok in vocab:
                e = vocab.stoi[tok]
            else:
                if tok not in row_oov:
                    row_oov.append(tok)
                e = V + row_oov.index(tok)
            mask[b, offset + j] = 1.0
            ext[b, offset + j] = e
        oov.append(row_oov)
    return CopyTable([list(z) for z in drafts], mask, ext, oov, offset)


@dataclass
class GoldTable:
    """Per target position: gold id, whether it counts for generation, and
    which draft positions copy it.  Targets are the reference plus EOS."""

    ids: np.ndarray
    in_vocab: np.ndarray
    mask: np.ndarray
    match: np.ndarray


def gold_table(ys: Sequence[Sequence[str]], table: CopyTable, vocab: Vocabulary) -> GoldTable:
    B = len(ys)
    N = max(len(y) for y in ys) + 1
    W = table.mask.shape[1]
    ids = np.full((B, N), vocab.eos_id, dtype=np.int64)
    in_vocab = np.ones((B, N), dtype=bool)
    mask = np.zeros((B, N))
    match = np.zeros((B, N, W), dtype=bool)
    for b, y in enumerate(ys):
        z = table.tokens[b]
        positions: dict[str, list[int]] = {}
        for j, tok in enumerate(z):
            positions.setdefault(tok, []).append(table.offset + j)
        for i, tok in enumerate(y):
            where = positions.get(tok, ())
            match[b, i, list(where)] = True
            if tok in vocab:
                ids[b, i] = vocab.stoi[tok]
            elif where:
                in_vocab[b, i] = False
                ids[b, i] = vocab.unk_id
            else:
                ids[b, i] = vocab.unk_id
        mask[b, : len(y) + 1] = 1.0
    return GoldTable(ids, in_vocab, mask, match)


def generation_mask(vocab: Vocabulary) -> np.ndarray:
    """Vocabulary entries the decoder may emit (never PAD, SOS or ALIGN)."""
    m = np.ones(len(vocab))
    m[[vocab.pad_id, vocab.sos_id, vocab.align_id]] = 0.0
    return m
