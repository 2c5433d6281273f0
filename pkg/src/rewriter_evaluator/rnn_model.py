"""Recurrent rewriter-evaluator.

Source and draft are read by bidirectional GRU encoders.  The rewriter is an
attention GRU decoder with input feeding whose readout also sees a summary
of the previous draft, topped by the pointer-generator head.  The evaluator
scores a (source, draft) pair by co-attention over the same encoders when
sharing is on, or over its own encoders otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, no_grad, parameter
from .base import RewriterEvaluator
from .batching import CopyTable, copy_table, generation_mask, gold_table, pad
from .evaluator import CoAttentionScorer, hinge_loss
from .nn import AdditiveAttention, BiGRUEncoder, GRUCell, Linear, attend, glorot, masked_mean
from .pointer import PointerHead, extended_distribution, gold_probability
from .vocab import Vocabulary


@dataclass
class _Context:
    h: Tensor
    src_mask: np.ndarray
    src_keys: Tensor
    p: Tensor
    ctx_mask: np.ndarray
    draft_keys: Tensor
    table: CopyTable
    s0: Tensor

    def select(self, rows: np.ndarray) -> "_Context":
        def take(t):
            return Tensor(t.data[rows])

        return _Context(
            take(self.h),
            self.src_mask[rows],
            take(self.src_keys),
            take(self.p),
            self.ctx_mask[rows],
            take(self.draft_keys),
            self.table.select(rows),
            take(self.s0),
        )


class GRURewriterEvaluator(RewriterEvaluator):
    backbone = "gru"

    def __init__(
        self,
        vocab: Vocabulary,
        hidden: int = 32,
        share_encoders: bool = True,
        copy: bool = True,
        seed: int = 0,
    ):
        self.vocab = vocab
        self.hidden = hidden
        self.share_encoders = share_encoders
        self.copy = copy
        self.seed = seed
        rng = np.random.default_rng(seed)
        V, d = len(vocab), hidden
        self.src_encoder = BiGRUEncoder(rng, V, d, d)
        self.tgt_encoder = BiGRUEncoder(rng, V, d, d)
        self.dec_emb = parameter(glorot(rng, V, d))
        self.dec_cell = GRUCell(rng, 2 * d, d)
        self.init = Linear(rng, d, d)
        self.src_attn = AdditiveAttention(rng, d, d, d)
        self.pointer = PointerHead(rng, d, d, d)
        self.readout = Linear(rng, 3 * d, d)
        self.generator = Linear(rng, d, V)
        self.scorer = CoAttentionScorer(rng, d)
        if share_encoders:
            self.eval_src_encoder = self.src_encoder
            self.eval_tgt_encoder = self.tgt_encoder
        else:
            self.eval_src_encoder = BiGRUEncoder(rng, V, d, d)
            self.eval_tgt_encoder = BiGRUEncoder(rng, V, d, d)
        self._gen_mask = generation_mask(vocab)

    def config(self) -> dict:
        return {
            "backbone": self.backbone,
            "hidden": self.hidden,
            "share_encoders": self.share_encoders,
            "copy": self.copy,
            "seed": self.seed,
        }

    # -- encoders ---------------------------------------------------------

    def _encode(self, encoder: BiGRUEncoder, seqs: Sequence[Sequence[str]]):
        ids, mask = pad([self.vocab.encode(s, wrap=True) for s in seqs], self.vocab.pad_id)
        return encoder(ids, mask), mask

    def encode_source(self, x: Sequence[str]) -> Tensor:
        """(M, d) representations of ``[SOS] + x + [EOS]``."""
        h, _ = self._encode(self.src_encoder, [x])
        return h[0]

    def encode_target(self, z: Sequence[str]) -> Tensor:
        """(L + 2, d) representations of a draft; the empty draft gives 2 rows."""
        p, _ = self._encode(self.tgt_encoder, [z])
        return p[0]

    # -- rewriter ---------------------------------------------------------

    def _context(self, xs, drafts, encoded_src=None) -> _Context:
        h, src_mask = encoded_src if encoded_src is not None else self._encode(self.src_encoder, xs)
        p, p_mask = self._encode(self.tgt_encoder, drafts)
        table = copy_table(drafts, self.vocab, p.shape[1], offset=1)
        # drafts with nothing to copy still get a draft summary over SOS/EOS
        ctx_mask = np.where(table.has_copy[:, None], table.mask, p_mask)
        s0 = ad.tanh(self.init(masked_mean(h, src_mask)))
        return _Context(
            h, src_mask, self.src_attn.project_keys(h), p, ctx_mask, self.pointer.project_draft(p), table, s0
        )

    def _advance(self, c: _Context, emb: Tensor, s: Tensor, o: Tensor):
        s = self.dec_cell(ad.concat([emb, o], axis=-1), s)
        a = ad.softmax(self.src_attn.scores(s, c.src_keys), c.src_mask)
        pi_s = self.pointer.attention(s, c.draft_keys, c.ctx_mask)
        o = ad.tanh(self.readout(ad.concat([s, attend(a, c.h), attend(pi_s, c.p)], axis=-1)))
        return s, o, pi_s

    def _emit(self, c: _Context, s: Tensor, o: Tensor):
        pi_v = ad.softmax(self.generator(o), self._gen_mask)
        if not self.copy:
            return pi_v, None
        lam = self.pointer.gate(s)
        hc = c.table.has_copy.astype(np.float64).reshape((-1,) + (1,) * (lam.ndim - 1))
        return pi_v, lam * hc + (1.0 - hc)

    def rewrite_losses(self, xs, drafts, ys, encoded_src=None) -> Tensor:
        """Teacher-forced negative log-likelihood of each reference, shape (B,)."""
        c = self._context(xs, drafts, encoded_src)
        gold = gold_table(ys, c.table, self.vocab)
        B, N = gold.ids.shape
        y_in, _ = pad([[self.vocab.sos_id] + self.vocab.encode(y) for y in ys], self.vocab.pad_id, N)
        emb = ad.take_rows(self.dec_emb, y_in[:, :N])
        s, o = c.s0, Tensor(np.zeros((B, self.hidden)))
        states, outs, ptrs = [], [], []
        for i in range(N):
            s, o, pi_s = self._advance(c, emb[:, i], s, o)
            states.append(s)
            outs.append(o)
            ptrs.append(pi_s)
        S, O = ad.stack(states, axis=1), ad.stack(outs, axis=1)
        pi_v, lam = self._emit(c, S, O)
        prob = gold_probability(pi_v, ad.stack(ptrs, axis=1), lam, gold.ids, gold.in_vocab, gold.match)
        prob = prob * gold.mask + (1.0 - gold.mask)
        return -ad.tsum(ad.log(prob), axis=1)

    def session(self, xs, drafts) -> "GRUSession":
        with no_grad():
            return GRUSession(self, self._context(xs, drafts))

    # -- evaluator --------------------------------------------------------

    def scores(self, xs, zs, encoded_src=None) -> Tensor:
        h, hm = encoded_src if encoded_src is not None else self._encode(self.eval_src_encoder, xs)
        p, pm = self._encode(self.eval_tgt_encoder, zs)
        return self.scorer(h, p, hm, pm)

    def training_losses(self, xs, prev_drafts, ys, new_drafts):
        """Per-sample teacher-forcing and hinge losses for one PGD update."""
        src = self._encode(self.src_encoder, xs)
        rewrite = self.rewrite_losses(xs, prev_drafts, ys, encoded_src=src)
        h, hm = src if self.share_encoders else self._encode(self.eval_src_encoder, xs)
        B = len(xs)
        q = self.scores(None, list(ys) + list(new_drafts), encoded_src=(ad.concat([h, h], axis=0), np.concatenate([hm, hm])))
        return rewrite, hinge_loss(q[:B], q[B:])


class GRUSession:
    def __init__(self, model: GRURewriterEvaluator, c: _Context):
        self.model = model
        self.c = c
        self.batch_size = c.h.shape[0]
        self.sos_id = model.vocab.sos_id
        self.eos_id = model.vocab.eos_id
        self.s = c.s0
        self.o = Tensor(np.zeros((self.batch_size, model.hidden)))

    def step(self, prev: np.ndarray) -> np.ndarray:
        m, V = self.model, len(self.model.vocab)
        ids = np.where(prev < V, prev, m.vocab.unk_id)
        with no_grad():
            self.s, self.o, pi_s = m._advance(self.c, ad.take_rows(m.dec_emb, ids), self.s, self.o)
            pi_v, lam = m._emit(self.c, self.s, self.o)
        t = self.c.table
        return extended_distribution(
            pi_v.data, pi_s.data, None if lam is None else lam.data, t.ext_ids, t.n_ext
        )

    def select(self, rows: np.ndarray) -> None:
        self.c = self.c.select(rows)
        self.s = Tensor(self.s.data[rows])
        self.o = Tensor(self.o.data[rows])
        self.batch_size = len(rows)

    def surface(self, row: int, ext_id: int) -> str:
        V = len(self.model.vocab)
        return self.model.vocab.itos[ext_id] if ext_id < V else self.c.table.oov[row][ext_id - V]
