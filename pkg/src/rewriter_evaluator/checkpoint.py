"""Versioned text checkpoints: one line per named float64 array."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = "REWEVAL-CKPT v1"


def save_arrays(path, arrays: Mapping[str, np.ndarray], meta: dict | None = None) -> None:
    lines = [MAGIC, "meta " + json.dumps(meta or {}, sort_keys=True)]
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype=np.float64)
        if any(c.isspace() for c in name):
            raise ValueError(f"parameter name {name!r} contains whitespace")
        shape = ",".join(str(n) for n in arr.shape) or "-"
        values = " ".join(repr(float(v)) for v in arr.reshape(-1))
        lines.append(f"param {name} {shape} {values}")
    tmp = Path(str(path) + ".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    tmp.replace(path)


def load_arrays(path) -> tuple[dict[str, np.ndarray], dict]:
    text = Path(path).read_text().splitlines()
    if not text or text[0] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint (missing {MAGIC!r} header)")
    meta: dict = {}
    arrays: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(text[1:], start=2):
        if line.startswith("meta "):
            meta = json.loads(line[5:])
            continue
        parts = line.split(" ")
        if len(parts) < 3 or parts[0] != "param":
            raise ValueError(f"{path}:{lineno}: malformed checkpoint line")
        shape = () if parts[2] == "-" else tuple(int(n) for n in parts[2].split(","))
        values = np.array([float(v) for v in parts[3:] if v], dtype=np.float64)
        if values.size != int(np.prod(shape)):
            raise ValueError(f"{path}:{lineno}: {parts[1]} has {values.size} values for shape {shape}")
        arrays[parts[1]] = values.reshape(shape)
    return arrays, meta
