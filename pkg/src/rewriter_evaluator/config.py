"""Flat ``key = value`` run configuration with ``#`` comments."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ContractViolation
from .pgd import TrainerConfig, rho_fn

BACKBONES = ("gru", "transformer-mini")


class ConfigError(ContractViolation):
    pass


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_int(text: str) -> int | None:
    return None if text.lower() in ("", "none") else int(text)


def _optional_float(text: str) -> float | None:
    return None if text.lower() in ("", "none") else float(text)


@dataclass
class RunConfig:
    backbone: str = "gru"
    share: bool = True
    copy: bool = True
    rho: str = "annealed"
    delta: float = 0.01
    max_k: int = 4
    expected_iterations: int = 3
    batch_size: int = 16
    hidden: int = 32
    seed: int = 0
    lr: float = 3e-3
    clip_norm: float | None = 5.0
    max_epochs: int = 20
    max_samples: int | None = None
    patience: int | None = 3
    beam_size: int = 4
    train: str = "train.jsonl"
    dev: str = ""
    test: str = ""
    out_dir: str = "run"

    def __post_init__(self):
        if self.backbone not in BACKBONES:
            raise ConfigError(f"backbone must be one of {BACKBONES}, got {self.backbone!r}")
        if self.hidden < 2 or self.hidden % 2:
            raise ConfigError("hidden must be an even number >= 2")
        if self.beam_size < 1:
            raise ConfigError("beam_size must be >= 1")
        if self.delta < 0:
            raise ConfigError("delta must be non-negative")
        try:
            rho_fn(self.rho)
            self.trainer_config()
        except ContractViolation as e:
            raise ConfigError(str(e)) from None

    def trainer_config(self) -> TrainerConfig:
        return TrainerConfig(
            batch_size=self.batch_size,
            expected_iterations=self.expected_iterations,
            max_passes=self.max_k,
            rho=self.rho,
            lr=self.lr,
            clip_norm=self.clip_norm,
            max_epochs=self.max_epochs,
            max_samples=self.max_samples,
            patience=self.patience,
            seed=self.seed,
        )

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def resolve(self, base: Path) -> "RunConfig":
        """Make relative paths relative to ``base`` (the config file's folder)."""
        out = {}
        for key in ("train", "dev", "test", "out_dir"):
            val = getattr(self, key)
            out[key] = str(base / val) if val and not Path(val).is_absolute() else val
        return self.replace(**out)

    def to_text(self) -> str:
        return "".join(f"{f.name} = {_show(getattr(self, f.name))}\n" for f in fields(self))

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
            parser = _PARSERS[known[key].type]
            try:
                values[key] = parser(val)
            except ValueError as e:
                raise ConfigError(f"{source}:{lineno}: {key}: {e}") from None
        return cls(**values)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        return cls.from_text(path.read_text(), str(path)).resolve(path.parent)


# field annotations are strings under postponed evaluation
_PARSERS = {
    "bool": _parse_bool,
    "int": int,
    "float": float,
    "str": str,
    "int | None": _optional_int,
    "float | None": _optional_float,
}


def _show(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)
