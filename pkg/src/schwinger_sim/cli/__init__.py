"""Command-line interface: ``schwinger-sim <subcommand> --config run.toml``."""

from __future__ import annotations

from .config import ConfigError, RunConfig, load_config, parse_config
from .main import main

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "main"]
