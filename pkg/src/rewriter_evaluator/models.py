"""Backbone construction and model checkpoints."""

from __future__ import annotations

from .base import RewriterEvaluator
from .checkpoint import load_arrays, save_arrays
from .errors import ContractViolation
from .rnn_model import GRURewriterEvaluator
from .transformer import TransformerRewriterEvaluator
from .vocab import Vocabulary

BACKBONES = {
    "gru": GRURewriterEvaluator,
    "transformer-mini": TransformerRewriterEvaluator,
}


def build_model(backbone: str, vocab: Vocabulary, **kwargs) -> RewriterEvaluator:
    try:
        cls = BACKBONES[backbone]
    except KeyError:
        raise ContractViolation(f"unknown backbone {backbone!r}") from None
    return cls(vocab, **kwargs)


def save_model(model: RewriterEvaluator, path, extra: dict | None = None) -> None:
    meta = {"model": model.config(), "vocab": model.vocab.itos}
    meta.update(extra or {})
    arrays = {"model." + n: p.data for n, p in model.named_parameters().items()}
    save_arrays(path, arrays, meta)


def load_model(path) -> tuple[RewriterEvaluator, dict]:
    """Rebuild a model from a model or trainer checkpoint."""
    arrays, meta = load_arrays(path)
    if "model" not in meta or "vocab" not in meta:
        raise ValueError(f"{path}: checkpoint lacks model metadata")
    cfg = dict(meta["model"])
    backbone = cfg.pop("backbone")
    model = build_model(backbone, Vocabulary(meta["vocab"][5:]), **cfg)
    if model.vocab.itos != meta["vocab"]:
        raise ValueError(f"{path}: stored vocabulary is inconsistent")
    model.load_state_dict({n[6:]: v for n, v in arrays.items() if n.startswith("model.")})
    return model, meta
