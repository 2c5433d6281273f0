"""Parameter containers and the recurrent/attention layers shared by both backbones."""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, parameter
from .errors import ShapeError


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape if shape is not None else (fan_in, fan_out))


class Module:
    """Attribute-walking parameter registry.

    Parameter names are dotted attribute paths.  A submodule reachable from
    two attributes (shared encoders) is reported once, under the first path.
    """

    def named_parameters(self, prefix: str = "", _seen=None) -> dict[str, Tensor]:
        seen = set() if _seen is None else _seen
        out: dict[str, Tensor] = {}
        for key, val in vars(self).items():
            if isinstance(val, Tensor) and val.requires_grad:
                if id(val) not in seen:
                    seen.add(id(val))
                    out[prefix + key] = val
            elif isinstance(val, Module):
                out.update(val.named_parameters(prefix + key + ".", seen))
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: p.data.copy() for n, p in self.named_parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        params = self.named_parameters()
        missing = set(params) - set(state)
        if strict and missing:
            raise KeyError(f"missing parameters: {sorted(missing)}")
        for name, p in params.items():
            if name not in state:
                continue
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ShapeError(f"{name}: checkpoint shape {arr.shape} != {p.data.shape}")
            p.data = arr.copy()

    def zero_grad(self) -> None:
        for p in self.named_parameters().values():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.size for p in self.named_parameters().values())


class Linear(Module):
    def __init__(self, rng, n_in: int, n_out: int, bias: bool = True):
        self.W = parameter(glorot(rng, n_in, n_out))
        self.b = parameter(np.zeros(n_out)) if bias else None

    def __call__(self, x) -> Tensor:
        y = ad.matmul(x, self.W)
        return y + self.b if self.b is not None else y


class GRUCell(Module):
    """Gated recurrent unit, gate order (reset, update, candidate)."""

    def __init__(self, rng, n_in: int, n_hidden: int):
        self.n_hidden = n_hidden
        self.W = parameter(glorot(rng, n_in, 3 * n_hidden))
        self.U = parameter(glorot(rng, n_hidden, 3 * n_hidden))
        self.b = parameter(np.zeros(3 * n_hidden))
        self.b_h = parameter(np.zeros(3 * n_hidden))

    def input_proj(self, x) -> Tensor:
        """Input contribution to all three gates; may be hoisted out of a time loop."""
        return ad.matmul(x, self.W) + self.b

    def step(self, gi: Tensor, h: Tensor) -> Tensor:
        return gru_step(gi, h, self.U, self.b_h)

    def step_reference(self, gi: Tensor, h: Tensor) -> Tensor:
        """The same update composed from elementary ops (slower)."""
        H = self.n_hidden
        gh = ad.matmul(h, self.U) + self.b_h
        rz = ad.sigmoid(gi[:, : 2 * H] + gh[:, : 2 * H])
        r, z = rz[:, :H], rz[:, H:]
        n = ad.tanh(gi[:, 2 * H :] + r * gh[:, 2 * H :])
        return n + z * (h - n)

    def __call__(self, x, h) -> Tensor:
        return self.step(self.input_proj(x), h)


def gru_step(gi, h, U, b_h) -> Tensor:
    """Fused GRU update from input gates ``gi`` (B, 3H) and state ``h`` (B, H).

    r, z = sigmoid(gi_rz + h U_rz + b_rz); n = tanh(gi_n + r * (h U_n + b_n));
    h' = (1 - z) * n + z * h.
    """
    gi, h = ad.as_tensor(gi), ad.as_tensor(h)
    H = h.shape[-1]
    gh = h.data @ U.data + b_h.data
    rz = ad._sigmoid(gi.data[:, : 2 * H] + gh[:, : 2 * H])
    r, z = rz[:, :H], rz[:, H:]
    hn = gh[:, 2 * H :]
    n = np.tanh(gi.data[:, 2 * H :] + r * hn)
    out = n + z * (h.data - n)

    def backward(g):
        dpre_n = g * (1.0 - z) * (1.0 - n * n)
        d_rz = np.concatenate([dpre_n * hn * r * (1.0 - r), g * (h.data - n) * z * (1.0 - z)], axis=1)
        dgi = np.concatenate([d_rz, dpre_n], axis=1)
        dgh = np.concatenate([d_rz, dpre_n * r], axis=1)
        return dgi, g * z + dgh @ U.data.T, h.data.T @ dgh, dgh.sum(axis=0)

    return ad.make_op(out, (gi, h, U, b_h), backward)


class BiGRUEncoder(Module):
    """Embedding + bidirectional GRU; each direction carries half of ``d``."""

    def __init__(self, rng, vocab_size: int, emb_dim: int, d: int):
        if d % 2:
            raise ValueError("encoder width must be even")
        self.d = d
        self.emb = parameter(glorot(rng, vocab_size, emb_dim))
        self.fwd = GRUCell(rng, emb_dim, d // 2)
        self.bwd = GRUCell(rng, emb_dim, d // 2)

    def __call__(self, ids: np.ndarray, mask: np.ndarray | None = None) -> Tensor:
        """Encode right-padded ``ids`` (B, T) into (B, T, d).

        Rows at padded positions are arbitrary; the backward direction is
        held at zero across padding so valid rows match the unpadded result.
        """
        ids = np.atleast_2d(ids)
        B, T = ids.shape
        if mask is None:
            mask = np.ones((B, T))
        e = ad.take_rows(self.emb, ids)
        gf = self.fwd.input_proj(e)
        gb = self.bwd.input_proj(e)
        H = self.d // 2
        h = Tensor(np.zeros((B, H)))
        fwd = []
        for t in range(T):
            h = self.fwd.step(gf[:, t], h)
            fwd.append(h)
        h = Tensor(np.zeros((B, H)))
        bwd = [None] * T
        full = mask.all(axis=0)
        for t in reversed(range(T)):
            h = self.bwd.step(gb[:, t], h)
            if not full[t]:
                h = h * mask[:, t : t + 1]
            bwd[t] = h
        return ad.concat([ad.stack(fwd, axis=1), ad.stack(bwd, axis=1)], axis=-1)


class AdditiveAttention(Module):
    """score(q, k_j) = v . tanh(W_q q + W_k k_j)."""

    def __init__(self, rng, d_query: int, d_key: int, d_attn: int):
        self.W_q = parameter(glorot(rng, d_query, d_attn))
        self.W_k = parameter(glorot(rng, d_key, d_attn))
        self.v = parameter(glorot(rng, d_attn, 1))

    def project_keys(self, keys: Tensor) -> Tensor:
        return ad.matmul(keys, self.W_k)

    def scores(self, query: Tensor, projected_keys: Tensor) -> Tensor:
        B, A = query.shape[0], self.W_q.shape[1]
        q = ad.reshape(ad.matmul(query, self.W_q), (B, 1, A))
        e = ad.matmul(ad.tanh(projected_keys + q), self.v)
        return ad.reshape(e, e.shape[:-1])


def attend(weights: Tensor, values: Tensor) -> Tensor:
    """Batched weighted sum: (B, T) weights over (B, T, d) values -> (B, d)."""
    B, T = weights.shape
    out = ad.matmul(ad.reshape(weights, (B, 1, T)), values)
    return ad.reshape(out, (B, values.shape[-1]))


def masked_mean(x: Tensor, mask: np.ndarray) -> Tensor:
    """Mean over axis 1 of (B, T, d) counting only rows where ``mask`` is 1."""
    m = np.asarray(mask, dtype=np.float64)
    counts = m.sum(axis=1, keepdims=True)
    return ad.tsum(x * m[:, :, None], axis=1) / counts


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    mu = ad.mean(x, axis=-1, keepdims=True)
    c = x - mu
    var = ad.mean(c * c, axis=-1, keepdims=True)
    return c * ad.power(var + eps, -0.5) * gain + bias
