"""Self-describing JSON checkpoint: parameter name -> shape + row-major values."""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from .tensor import Tensor, TensorkitError

CHECKPOINT_VERSION = "dfgnkit-v1"


def save_checkpoint(params: dict[str, Tensor], path: str, extra: dict | None = None) -> None:
    """Write atomically (temp file + rename)."""
    blob = {
        "version": CHECKPOINT_VERSION,
        "params": {
            name: {"shape": list(p.shape), "data": p.data.reshape(-1).tolist()}
            for name, p in params.items()
        },
    }
    if extra:
        blob["extra"] = extra
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            json.dump(blob, f)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, encoding="utf-8") as f:
        blob = json.load(f)
    if blob.get("version") != CHECKPOINT_VERSION:
        raise TensorkitError(f"unsupported checkpoint version {blob.get('version')!r}")
    arrays = {
        name: np.asarray(entry["data"], dtype=float).reshape(entry["shape"])
        for name, entry in blob["params"].items()
    }
    return arrays, blob.get("extra", {})


def restore_params(params: dict[str, Tensor], arrays: dict[str, np.ndarray]) -> None:
    """Copy loaded arrays into an existing parameter dict, checking shapes."""
    missing = set(params) - set(arrays)
    if missing:
        raise TensorkitError(f"checkpoint missing parameters: {sorted(missing)}")
    for name, p in params.items():
        a = arrays[name]
        if a.shape != p.shape:
            raise TensorkitError(f"shape mismatch for {name}: {a.shape} vs {p.shape}")
        p.data[...] = a
