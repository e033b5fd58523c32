"""Dynamically fused graph network for multi-hop text QA, desk scale."""

from .config import ConfigError, RunConfig, resolve_seed

__all__ = ["ConfigError", "RunConfig", "resolve_seed"]
__version__ = "0.1.0"
