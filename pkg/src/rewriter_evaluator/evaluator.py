"""Quality estimator: bilinear co-attention, mean pooling, linear score, hinge loss."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, parameter
from .nn import Module, glorot


def _batched(x: Tensor, mask):
    if x.ndim == 2:
        x = ad.reshape(x, (1, *x.shape))
    B, T = x.shape[:2]
    mask = np.ones((B, T)) if mask is None else np.asarray(mask, dtype=np.float64).reshape(B, T)
    return x, mask


def co_attention(h, p, W_E, h_mask=None, p_mask=None):
    """Soft alignment between source rows ``h`` (M, d) and draft rows ``p`` (L, d).

    alpha_ij = h_i . W_E . p_j.  Returns ``(h_tilde, p_tilde, row_weights,
    col_weights)`` where ``h_tilde_i`` attends over draft rows and
    ``p_tilde_j`` attends over source rows.  Batched (B, T, d) inputs with
    0/1 masks are accepted; unbatched inputs give unbatched outputs.
    """
    h, p = ad.as_tensor(h), ad.as_tensor(p)
    single = h.ndim == 2
    h, hm = _batched(h, h_mask)
    p, pm = _batched(p, p_mask)
    alpha = ad.matmul(ad.matmul(h, W_E), ad.swapaxes(p, 1, 2))
    rows = ad.softmax(alpha, pm[:, None, :], axis=2)
    cols = ad.softmax(alpha, hm[:, :, None], axis=1)
    h_t = ad.matmul(rows, p)
    p_t = ad.matmul(ad.swapaxes(cols, 1, 2), h)
    if single:
        return h_t[0], p_t[0], rows[0], cols[0]
    return h_t, p_t, rows, cols


def pooled_score(h_t, p_t, v_E, h_mask=None, p_mask=None) -> Tensor:
    """q = v_E . (mean_i h_tilde_i  (+)  mean_j p_tilde_j), means over valid rows."""
    h_t, p_t = ad.as_tensor(h_t), ad.as_tensor(p_t)
    single = h_t.ndim == 2
    h_t, hm = _batched(h_t, h_mask)
    p_t, pm = _batched(p_t, p_mask)
    hbar = ad.tsum(h_t * hm[:, :, None], axis=1) / hm.sum(axis=1, keepdims=True)
    pbar = ad.tsum(p_t * pm[:, :, None], axis=1) / pm.sum(axis=1, keepdims=True)
    q = ad.matmul(ad.concat([hbar, pbar], axis=-1), ad.reshape(ad.as_tensor(v_E), (-1, 1)))
    q = ad.reshape(q, (q.shape[0],))
    return ad.reshape(q, ()) if single else q


def hinge_loss(q_star, q_k) -> Tensor:
    """max(0, 1 - q_star + q_k), elementwise."""
    return ad.relu(1.0 - ad.as_tensor(q_star) + q_k)


class CoAttentionScorer(Module):
    def __init__(self, rng, d: int):
        self.W_E = parameter(glorot(rng, d, d))
        self.v_E = parameter(glorot(rng, 2 * d, 1).reshape(-1))

    def __call__(self, h, p, h_mask=None, p_mask=None) -> Tensor:
        h_t, p_t, _, _ = co_attention(h, p, self.W_E, h_mask, p_mask)
        return pooled_score(h_t, p_t, self.v_E, h_mask, p_mask)
