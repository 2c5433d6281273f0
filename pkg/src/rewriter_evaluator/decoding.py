"""Greedy and beam search over a step-wise decoder session.

A session wraps one encoded batch.  ``step(prev)`` consumes the previous
extended ids and returns next-token probabilities over the extended
vocabulary (vocabulary plus per-row copyable OOV tokens); ``select(rows)``
reorders/duplicates rows for beam search; ``surface(b, i)`` names an id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from .autodiff import no_grad


class DecoderSession(Protocol):
    batch_size: int
    sos_id: int
    eos_id: int

    def step(self, prev: np.ndarray) -> np.ndarray: ...

    def select(self, rows: np.ndarray) -> None: ...

    def surface(self, row: int, ext_id: int) -> str: ...


@dataclass
class Hypothesis:
    tokens: list[str] = field(default_factory=list)
    log_prob: float = 0.0
    finished: bool = False

    @property
    def length(self) -> int:
        """Generated symbols, counting the closing EOS when present."""
        return len(self.tokens) + (1 if self.finished else 0)

    @property
    def score(self) -> float:
        return self.log_prob / max(self.length, 1)

    @property
    def truncated(self) -> bool:
        return not self.finished


def _log(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(p)


def greedy_decode(session: DecoderSession, max_len: int | Sequence[int]) -> list[Hypothesis]:
    """Argmax decoding of every row until EOS or its ``max_len`` symbols."""
    B = session.batch_size
    limits = [max_len] * B if isinstance(max_len, int) else list(max_len)
    if min(limits) < 1:
        raise ValueError("max_len must be >= 1")
    hyps = [Hypothesis() for _ in range(B)]
    prev = np.full(B, session.sos_id, dtype=np.int64)
    with no_grad():
        for t in range(max(limits)):
            probs = session.step(prev)
            nxt = probs.argmax(axis=1)
            for b in range(B):
                h = hyps[b]
                if h.finished or t >= limits[b]:
                    continue
                h.log_prob += math.log(probs[b, nxt[b]])
                if nxt[b] == session.eos_id:
                    h.finished = True
                else:
                    h.tokens.append(session.surface(b, int(nxt[b])))
            if all(h.finished or t + 1 >= lim for h, lim in zip(hyps, limits)):
                break
            prev = nxt
    return hyps


def beam_decode(make_session: Callable[[], DecoderSession], beam_size: int, max_len: int) -> Hypothesis:
    """Length-normalized beam search for a single sentence.

    Live hypotheses are ranked by cumulative log probability; the returned
    hypothesis maximizes log probability divided by length.  The greedy
    path is always a candidate, so beam search never scores below greedy.
    """
    if beam_size < 1:
        raise ValueError("beam_size must be >= 1")
    greedy = greedy_decode(make_session(), max_len)[0]
    session = make_session()
    if session.batch_size != 1:
        raise ValueError("beam_decode works on one sentence at a time")
    live: list[Hypothesis] = [Hypothesis()]
    prev = np.array([session.sos_id])
    finished: list[Hypothesis] = []
    with no_grad():
        for _ in range(max_len):
            logp = _log(session.step(prev))
            total = np.array([h.log_prob for h in live])[:, None] + logp
            flat = total.reshape(-1)
            order = np.argsort(-flat, kind="stable")
            order = order[np.isfinite(flat[order])][:beam_size]
            V = logp.shape[1]
            rows, next_live, next_prev = [], [], []
            for k in order:
                r, tok = divmod(int(k), V)
                base = live[r]
                if tok == session.eos_id:
                    finished.append(Hypothesis(list(base.tokens), float(flat[k]), True))
                    continue
                rows.append(r)
                next_live.append(Hypothesis(base.tokens + [session.surface(r, tok)], float(flat[k])))
                next_prev.append(tok)
            if not next_live or len(finished) >= beam_size:
                live = next_live
                break
            session.select(np.array(rows))
            live, prev = next_live, np.array(next_prev)
    pool = finished if finished else live
    pool = pool + [greedy]
    return max(pool, key=lambda h: h.score)
