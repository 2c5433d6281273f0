"""Single-layer attention rewriter-evaluator over a packed input.

The encoder reads ``x + [ALIGN] + z_prev`` in one sequence.  A block mask
keeps source and draft positions from seeing each other while ALIGN sees
everything; its output is the evaluator's summary.  The decoder is a causal
self-attention layer with cross-attention over the packed encoding, and the
pointer-generator head copies from the encoder outputs at draft positions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, no_grad, parameter
from .base import RewriterEvaluator
from .batching import CopyTable, copy_table, generation_mask, gold_table, pad
from .errors import ContractViolation
from .evaluator import hinge_loss
from .nn import Linear, Module, glorot, layer_norm
from .pointer import PointerHead, extended_distribution, gold_probability
from .vocab import Vocabulary

SRC, ALIGN, DRAFT = 0, 1, 2


@dataclass
class PackedInput:
    ids: list[int]
    segments: list[int]
    positions: list[int]

    @property
    def align_index(self) -> int:
        return self.segments.index(ALIGN)

    def unpack(self) -> tuple[list[int], list[int]]:
        src = [i for i, s in zip(self.ids, self.segments) if s == SRC]
        draft = [i for i, s in zip(self.ids, self.segments) if s == DRAFT]
        return src, draft

    def __len__(self) -> int:
        return len(self.ids)


def pack_input(x_ids: Sequence[int], z_ids: Sequence[int], align_id: int) -> PackedInput:
    """Concatenate source, ALIGN and draft; positions restart for the draft."""
    if not x_ids:
        raise ContractViolation("source must be non-empty")
    M, L = len(x_ids), len(z_ids)
    return PackedInput(
        list(x_ids) + [align_id] + list(z_ids),
        [SRC] * M + [ALIGN] + [DRAFT] * L,
        list(range(M)) + [0] + list(range(L)),
    )


def build_mask(M: int, L: int, align_visible: bool = True) -> np.ndarray:
    """0/1 attention mask of side M + 1 + L; entry [i, j] lets i attend to j.

    Source and draft blocks are dense, cross blocks are zero, and ALIGN
    attends to every position.  With ``align_visible`` the ALIGN column is
    also open, so every position may read ALIGN; otherwise only ALIGN
    itself does.
    """
    if M < 1 or L < 0:
        raise ContractViolation("need M >= 1 and L >= 0")
    T = M + 1 + L
    m = np.zeros((T, T))
    m[:M, :M] = 1.0
    m[M + 1 :, M + 1 :] = 1.0
    m[M, :] = 1.0
    if align_visible:
        m[:, M] = 1.0
    return m


def attention(q: Tensor, k: Tensor, v: Tensor, mask: np.ndarray) -> Tensor:
    """Scaled dot-product attention; (B, T, d) inputs and a (B, T, S) 0/1 mask."""
    scores = ad.matmul(q, ad.swapaxes(k, 1, 2)) * (1.0 / math.sqrt(q.shape[-1]))
    return ad.matmul(ad.softmax(scores, mask, axis=-1), v)


class AttentionSublayer(Module):
    """Single-head attention, output projection, residual and layer norm."""

    def __init__(self, rng, d: int):
        self.W_q = parameter(glorot(rng, d, d))
        self.W_k = parameter(glorot(rng, d, d))
        self.W_v = parameter(glorot(rng, d, d))
        self.W_o = parameter(glorot(rng, d, d))
        self.gain = parameter(np.ones(d))
        self.bias = parameter(np.zeros(d))

    def __call__(self, x: Tensor, memory: Tensor, mask: np.ndarray) -> Tensor:
        a = attention(ad.matmul(x, self.W_q), ad.matmul(memory, self.W_k), ad.matmul(memory, self.W_v), mask)
        return layer_norm(x + ad.matmul(a, self.W_o), self.gain, self.bias)


class FeedForward(Module):
    def __init__(self, rng, d: int, d_ff: int):
        self.inner = Linear(rng, d, d_ff)
        self.outer = Linear(rng, d_ff, d)
        self.gain = parameter(np.ones(d))
        self.bias = parameter(np.zeros(d))

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x + self.outer(ad.relu(self.inner(x))), self.gain, self.bias)


class PackedEncoder(Module):
    """Token + position + segment embeddings followed by one masked attention block."""

    def __init__(self, rng, vocab_size: int, d: int, max_positions: int):
        self.tok = parameter(glorot(rng, vocab_size, d))
        self.pos = parameter(glorot(rng, max_positions, d))
        self.seg = parameter(glorot(rng, 3, d))
        self.attn = AttentionSublayer(rng, d)
        self.ffn = FeedForward(rng, d, 2 * d)

    def embed(self, batch: "PackedBatch") -> Tensor:
        if batch.positions.max() >= self.pos.shape[0]:
            raise ContractViolation(f"sequence longer than {self.pos.shape[0]} positions")
        return (
            ad.take_rows(self.tok, batch.ids)
            + ad.take_rows(self.pos, batch.positions)
            + ad.take_rows(self.seg, batch.segments)
        )

    def block(self, e: Tensor, mask: np.ndarray) -> Tensor:
        return self.ffn(self.attn(e, e, mask))

    def __call__(self, batch: "PackedBatch") -> Tensor:
        return self.block(self.embed(batch), batch.mask)


@dataclass
class PackedBatch:
    ids: np.ndarray
    segments: np.ndarray
    positions: np.ndarray
    mask: np.ndarray
    valid: np.ndarray
    align: np.ndarray
    draft_index: np.ndarray
    draft_lengths: np.ndarray


def pack_batch(
    xs: Sequence[Sequence[str]],
    zs: Sequence[Sequence[str]],
    vocab: Vocabulary,
    align_visible: bool = True,
) -> PackedBatch:
    """Right-padded packed inputs with per-row block masks.

    Padding rows attend only to themselves so every softmax row is valid.
    ``draft_index[b, j]`` is the packed position of draft token j.
    """
    packs = [pack_input(vocab.encode(x), vocab.encode(z), vocab.align_id) for x, z in zip(xs, zs)]
    B = len(packs)
    T = max(len(p) for p in packs)
    Lmax = max(1, max(len(z) for z in zs))
    ids, valid = pad([p.ids for p in packs], vocab.pad_id, T)
    segments, _ = pad([p.segments for p in packs], SRC, T)
    positions, _ = pad([p.positions for p in packs], 0, T)
    mask = np.zeros((B, T, T))
    mask[:, np.arange(T), np.arange(T)] = 1.0
    align = np.zeros(B, dtype=np.int64)
    draft_index = np.zeros((B, Lmax), dtype=np.int64)
    for b, (x, z) in enumerate(zip(xs, zs)):
        M, L = len(x), len(z)
        n = M + 1 + L
        mask[b, :n, :n] = build_mask(M, L, align_visible)
        align[b] = M
        draft_index[b, :L] = np.arange(M + 1, n)
        draft_index[b, L:] = M
    return PackedBatch(
        ids, segments, positions, mask, valid, align, draft_index, np.array([len(z) for z in zs])
    )


def align_score(reps: Tensor, align: np.ndarray, v_E: Tensor) -> Tensor:
    """q = v_E . h_ALIGN per row of a (B, T, d) encoding."""
    h = ad.getitem(reps, (np.arange(reps.shape[0]), align))
    return ad.reshape(ad.matmul(h, ad.reshape(v_E, (-1, 1))), (reps.shape[0],))


class CausalDecoder(Module):
    def __init__(self, rng, vocab_size: int, d: int, max_positions: int):
        self.tok = parameter(glorot(rng, vocab_size, d))
        self.pos = parameter(glorot(rng, max_positions, d))
        self.self_attn = AttentionSublayer(rng, d)
        self.cross_attn = AttentionSublayer(rng, d)
        self.ffn = FeedForward(rng, d, 2 * d)

    def __call__(self, prefix: np.ndarray, memory: Tensor, memory_mask: np.ndarray) -> Tensor:
        """Decoder states (B, N, d) for input ids (B, N); state i predicts token i."""
        B, N = prefix.shape
        if N > self.pos.shape[0]:
            raise ContractViolation(f"target longer than {self.pos.shape[0]} positions")
        e = ad.take_rows(self.tok, prefix) + self.pos[:N]
        causal = np.broadcast_to(np.tril(np.ones((N, N))), (B, N, N))
        s = self.self_attn(e, e, causal)
        cross = np.broadcast_to(memory_mask[:, None, :], (B, N, memory_mask.shape[1]))
        return self.ffn(self.cross_attn(s, memory, cross))


@dataclass
class _Context:
    enc: Tensor
    enc_mask: np.ndarray
    p: Tensor
    draft_keys: Tensor
    ctx_mask: np.ndarray
    table: CopyTable

    def select(self, rows: np.ndarray) -> "_Context":
        return _Context(
            Tensor(self.enc.data[rows]),
            self.enc_mask[rows],
            Tensor(self.p.data[rows]),
            Tensor(self.draft_keys.data[rows]),
            self.ctx_mask[rows],
            self.table.select(rows),
        )


class TransformerRewriterEvaluator(RewriterEvaluator):
    backbone = "transformer-mini"

    def __init__(
        self,
        vocab: Vocabulary,
        hidden: int = 32,
        share_encoders: bool = True,
        copy: bool = True,
        seed: int = 0,
        max_positions: int = 128,
        align_visible: bool = True,
    ):
        self.vocab = vocab
        self.hidden = hidden
        self.share_encoders = share_encoders
        self.copy = copy
        self.seed = seed
        self.max_positions = max_positions
        self.align_visible = align_visible
        rng = np.random.default_rng(seed)
        V, d = len(vocab), hidden
        self.encoder = PackedEncoder(rng, V, d, max_positions)
        self.decoder = CausalDecoder(rng, V, d, max_positions)
        self.pointer = PointerHead(rng, d, d, d)
        self.generator = Linear(rng, d, V)
        self.v_E = parameter(glorot(rng, d, 1).reshape(-1))
        self.eval_encoder = self.encoder if share_encoders else PackedEncoder(rng, V, d, max_positions)
        self._gen_mask = generation_mask(vocab)

    def config(self) -> dict:
        return {
            "backbone": self.backbone,
            "hidden": self.hidden,
            "share_encoders": self.share_encoders,
            "copy": self.copy,
            "seed": self.seed,
            "max_positions": self.max_positions,
            "align_visible": self.align_visible,
        }

    def pack(self, xs, zs) -> PackedBatch:
        return pack_batch(xs, zs, self.vocab, self.align_visible)

    def _context(self, xs, drafts, batch=None, enc=None) -> _Context:
        batch = batch if batch is not None else self.pack(xs, drafts)
        enc = enc if enc is not None else self.encoder(batch)
        B = len(xs)
        p = ad.getitem(enc, (np.arange(B)[:, None], batch.draft_index))
        table = copy_table(drafts, self.vocab, p.shape[1], offset=0)
        # an empty draft has nothing to copy; park the pointer on ALIGN
        ctx_mask = table.mask.copy()
        ctx_mask[~table.has_copy, 0] = 1.0
        return _Context(enc, batch.valid, p, self.pointer.project_draft(p), ctx_mask, table)

    def _emit(self, c: _Context, s: Tensor):
        """Vocabulary distribution, draft attention and gate for decoder states (B, N, d)."""
        pi_v = ad.softmax(self.generator(s), self._gen_mask)
        B, N, d = s.shape
        flat = ad.reshape(s, (B * N, d))
        keys = c.draft_keys
        L, A = keys.shape[1], keys.shape[2]
        rep = ad.reshape(ad.concat([ad.expand_dims(keys, 1)] * N, axis=1), (B * N, L, A)) if N > 1 else keys
        mask = np.repeat(c.ctx_mask, N, axis=0)
        pi_s = ad.reshape(self.pointer.attention(flat, rep, mask), (B, N, L))
        if not self.copy:
            return pi_v, pi_s, None
        lam = ad.reshape(self.pointer.gate(flat), (B, N, 1))
        hc = c.table.has_copy.astype(np.float64)[:, None, None]
        return pi_v, pi_s, lam * hc + (1.0 - hc)

    def rewrite_losses(self, xs, drafts, ys, batch=None, enc=None) -> Tensor:
        c = self._context(xs, drafts, batch, enc)
        gold = gold_table(ys, c.table, self.vocab)
        N = gold.ids.shape[1]
        prefix, _ = pad([[self.vocab.sos_id] + self.vocab.encode(y) for y in ys], self.vocab.pad_id, N)
        s = self.decoder(prefix[:, :N], c.enc, c.enc_mask)
        pi_v, pi_s, lam = self._emit(c, s)
        prob = gold_probability(pi_v, pi_s, lam, gold.ids, gold.in_vocab, gold.match)
        prob = prob * gold.mask + (1.0 - gold.mask)
        return -ad.tsum(ad.log(prob), axis=1)

    def session(self, xs, drafts) -> "TransformerSession":
        with no_grad():
            return TransformerSession(self, self._context(xs, drafts))

    def scores(self, xs, zs) -> Tensor:
        batch = self.pack(xs, zs)
        return align_score(self.eval_encoder(batch), batch.align, self.v_E)

    def training_losses(self, xs, prev_drafts, ys, new_drafts):
        rewrite = self.rewrite_losses(xs, prev_drafts, ys)
        B = len(xs)
        q = self.scores(list(xs) + list(xs), list(ys) + list(new_drafts))
        return rewrite, hinge_loss(q[:B], q[B:])


class TransformerSession:
    """Incremental decoding by re-running the decoder over the growing prefix."""

    def __init__(self, model: TransformerRewriterEvaluator, c: _Context):
        self.model = model
        self.c = c
        self.batch_size = c.enc.shape[0]
        self.sos_id = model.vocab.sos_id
        self.eos_id = model.vocab.eos_id
        self.prefix = np.zeros((self.batch_size, 0), dtype=np.int64)

    def step(self, prev: np.ndarray) -> np.ndarray:
        m, V = self.model, len(self.model.vocab)
        ids = np.where(prev < V, prev, m.vocab.unk_id)
        self.prefix = np.concatenate([self.prefix, ids[:, None]], axis=1)
        with no_grad():
            s = m.decoder(self.prefix, self.c.enc, self.c.enc_mask)
            last = s[:, -1:]
            pi_v, pi_s, lam = m._emit(self.c, last)
        t = self.c.table
        return extended_distribution(
            pi_v.data[:, 0],
            pi_s.data[:, 0],
            None if lam is None else lam.data[:, 0],
            t.ext_ids,
            t.n_ext,
        )

    def select(self, rows: np.ndarray) -> None:
        self.c = self.c.select(rows)
        self.prefix = self.prefix[rows]
        self.batch_size = len(rows)

    def surface(self, row: int, ext_id: int) -> str:
        V = len(self.model.vocab)
        return self.model.vocab.itos[ext_id] if ext_id < V else self.c.table.oov[row][ext_id - V]
