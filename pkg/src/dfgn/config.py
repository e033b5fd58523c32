"""Run configuration: dataclass defaults, file loading, validation."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass

try:
    import tomllib
except ModuleNotFoundError:  # < 3.11
    tomllib = None


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    d1: int = 64
    d2: int = 64
    hops: int = 2
    eta: float = 0.1
    lambda_s: float = 1.0
    lambda_t: float = 1.0
    lambda_mask: float = 1.0
    lr: float = 1e-4
    epochs: int = 20
    dropout_lstm: float = 0.3
    dropout_gat: float = 0.5
    max_nodes: int = 40
    max_span: int = 15
    max_seq_len: int = 512
    # selector sub-network
    selector_dim: int = 16
    selector_lr: float = 3e-3
    selector_epochs: int = 2
    # stop once dev answer EM reaches this (<= 0 disables early stopping);
    # when stopping is enabled, dev support F1 must also reach
    # early_stop_sup_f1 (0 places no requirement on it)
    early_stop_em: float = 0.0
    early_stop_sup_f1: float = 0.0
    # drop the weak mask supervision term entirely (ablation switch)
    use_bfs_supervision: bool = True

    def validate(self) -> "RunConfig":
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError(f"eta {self.eta} out of [0, 1]")
        if self.hops < 1:
            raise ConfigError("hops must be >= 1")
        for name in ("lambda_s", "lambda_t", "lambda_mask"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        for name in ("dropout_lstm", "dropout_gat"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{name} out of [0, 1)")
        if self.d1 <= 0 or self.d2 <= 0:
            raise ConfigError("d1 and d2 must be positive")
        if self.max_nodes < 1 or self.max_span < 1 or self.max_seq_len < 1:
            raise ConfigError("max_nodes, max_span, max_seq_len must be positive")
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d).validate()

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        if path.endswith(".toml"):
            if tomllib is None:
                raise ConfigError("TOML configs need Python >= 3.11; use JSON instead")
            with open(path, "rb") as f:
                d = tomllib.load(f)
        else:
            with open(path, encoding="utf-8") as f:
                d = json.load(f)
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def resolve_seed(explicit: int | None) -> int:
    """CLI seed, else the DFGN_SEED env var, else 0."""
    if explicit is not None:
        return explicit
    env = os.environ.get("DFGN_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"DFGN_SEED must be an integer, got {env!r}") from None
    return 0
