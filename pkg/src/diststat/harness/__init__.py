"""Command-line runner and synthetic data."""

from .cli import build_parser, main
from .data import gen_data, load_pet

__all__ = ["build_parser", "gen_data", "load_pet", "main"]
