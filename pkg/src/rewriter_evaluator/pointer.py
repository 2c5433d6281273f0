"""Pointer-generator head: copy attention over the previous draft and the
generate/copy mixture.

The mixture is applied literally: a token found both in the vocabulary and
in the draft gets ``lam * p_vocab + (1 - lam) * p_copy``, a vocabulary-only
token gets ``lam * p_vocab``, a draft-only (out-of-vocabulary) token gets
``(1 - lam) * p_copy``.  Summed over the union these masses total one.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, parameter
from .nn import Module, glorot
from .vocab import Vocabulary


class PointerHead(Module):
    """beta_ij = v_D . tanh(W_D s_i + V_D p_j);  lam_i = 1 / (1 + exp(u_D . s_i))."""

    def __init__(self, rng, d_state: int, d_draft: int, d_attn: int):
        self.W_D = parameter(glorot(rng, d_state, d_attn))
        self.V_D = parameter(glorot(rng, d_draft, d_attn))
        self.v_D = parameter(glorot(rng, d_attn, 1))
        self.u_D = parameter(glorot(rng, d_state, 1))

    def project_draft(self, p: Tensor) -> Tensor:
        return ad.matmul(p, self.V_D)

    def scores(self, s: Tensor, projected: Tensor) -> Tensor:
        B, A = s.shape[0], self.W_D.shape[1]
        q = ad.reshape(ad.matmul(s, self.W_D), (B, 1, A))
        beta = ad.matmul(ad.tanh(projected + q), self.v_D)
        return ad.reshape(beta, beta.shape[:-1])

    def attention(self, s: Tensor, projected: Tensor, mask=None) -> Tensor:
        return ad.softmax(self.scores(s, projected), mask, axis=-1)

    def gate(self, s: Tensor) -> Tensor:
        return copy_gate(s, self.u_D)


def pointer_attention(s_i, p_prev, W_D, V_D, v_D) -> Tensor:
    """Copy distribution of one decoder state (d,) over draft rows (L, d)."""
    s_i, p_prev = ad.as_tensor(s_i), ad.as_tensor(p_prev)
    pre = ad.matmul(p_prev, V_D) + ad.reshape(ad.matmul(ad.reshape(s_i, (1, -1)), W_D), (-1,))
    beta = ad.reshape(ad.matmul(ad.tanh(pre), ad.reshape(v_D, (-1, 1))), (-1,))
    return ad.softmax(beta)


def copy_gate(s, u_D) -> Tensor:
    """1 / (1 + exp(u_D . s)); accepts a single state (d,) or a batch (B, d)."""
    s = ad.as_tensor(s)
    u = ad.reshape(ad.as_tensor(u_D), (-1, 1))
    if s.ndim == 1:
        return ad.reshape(ad.sigmoid(-ad.matmul(ad.reshape(s, (1, -1)), u)), ())
    return ad.sigmoid(-ad.matmul(s, u))


def output_distribution(
    pi_v: np.ndarray,
    pi_s: np.ndarray,
    lam: float,
    copy_tokens: Sequence[str],
    vocab: Vocabulary,
) -> dict[str, float]:
    """Probability of every token in V united with ``copy_tokens``."""
    pi_v = np.asarray(pi_v, dtype=np.float64)
    pi_s = np.asarray(pi_s, dtype=np.float64)
    if len(copy_tokens) != len(pi_s):
        raise ValueError("pi_s must have one entry per copy token")
    lam = float(lam)
    dist = {tok: lam * float(pi_v[i]) for i, tok in enumerate(vocab.itos)}
    for tok, w in zip(copy_tokens, pi_s):
        dist[tok] = dist.get(tok, 0.0) + (1.0 - lam) * float(w)
    return dist


def extended_distribution(
    pi_v: np.ndarray,
    pi_s: np.ndarray | None,
    lam: np.ndarray | None,
    ext_ids: np.ndarray | None,
    n_ext: int,
) -> np.ndarray:
    """Batched mixture over ``V + n_ext`` extended ids.

    ``ext_ids[b, j]`` is the extended id of draft position j: the vocabulary
    id for in-vocabulary tokens, ``len(V) + k`` for the k-th distinct
    out-of-vocabulary token of row b.  ``lam`` of 1 disables copying.
    """
    B, V = pi_v.shape
    out = np.zeros((B, V + n_ext))
    if lam is None:
        out[:, :V] = pi_v
        return out
    lam = np.asarray(lam).reshape(B, 1)
    out[:, :V] = lam * pi_v
    rows = np.repeat(np.arange(B), pi_s.shape[1])
    np.add.at(out, (rows, ext_ids.reshape(-1)), ((1.0 - lam) * pi_s).reshape(-1))
    return out


def gold_probability(
    pi_v: Tensor,
    pi_s: Tensor | None,
    lam: Tensor | None,
    gold_ids: np.ndarray,
    gold_in_vocab: np.ndarray,
    match: np.ndarray | None,
) -> Tensor:
    """Mixture probability of the gold token for each row.

    ``pi_v`` may be (B, V) or (B, N, V) with matching leading shapes on the
    other arguments.  ``match`` marks draft positions whose token equals the
    gold token.  ``lam`` of ``None`` means generation only.
    """
    lead = gold_ids.shape
    idx = tuple(np.indices(lead)) + (gold_ids,)
    pv = ad.getitem(pi_v, idx) * gold_in_vocab.astype(np.float64)
    if lam is None:
        return pv
    lam = ad.reshape(lam, lead)
    pc = ad.tsum(pi_s * match.astype(np.float64), axis=-1)
    return lam * pv + (1.0 - lam) * pc
