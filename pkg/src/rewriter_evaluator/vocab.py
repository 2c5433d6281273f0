"""Token <-> id mapping with reserved special symbols."""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence

from .errors import ContractViolation

PAD, SOS, EOS, UNK, ALIGN = "<pad>", "<s>", "</s>", "<unk>", "<align>"
RESERVED = (PAD, SOS, EOS, UNK, ALIGN)


class Vocabulary:
    """Ids 0..4 are always PAD, SOS, EOS, UNK, ALIGN (in that order)."""

    def __init__(self, tokens: Iterable[str]):
        itos = list(RESERVED)
        for tok in tokens:
            if tok in RESERVED:
                continue
            itos.append(tok)
        if len(set(itos)) != len(itos):
            raise ContractViolation("vocabulary tokens must be unique")
        self.itos = itos
        self.stoi = {t: i for i, t in enumerate(itos)}

    pad_id, sos_id, eos_id, unk_id, align_id = range(5)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def id(self, token: str) -> int:
        return self.stoi.get(token, self.unk_id)

    def encode(self, tokens: Sequence[str], wrap: bool = False) -> list[int]:
        ids = [self.stoi.get(t, self.unk_id) for t in tokens]
        return [self.sos_id, *ids, self.eos_id] if wrap else ids

    def decode(self, ids: Iterable[int]) -> list[str]:
        out = []
        for i in ids:
            if not 0 <= i < len(self.itos):
                raise ContractViolation(f"token id {i} out of range")
            out.append(self.itos[i])
        return out

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.itos) + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text().split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if tuple(lines[: len(RESERVED)]) != RESERVED:
            raise ContractViolation(f"{path}: reserved symbols missing or out of order")
        return cls(lines[len(RESERVED) :])
