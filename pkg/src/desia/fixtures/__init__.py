"""Bundled example inputs: a tiny solvable fixture and a census-like setup."""

from importlib import resources
from pathlib import Path


def path(name: str) -> Path:
    """Filesystem path of a bundled fixture file."""
    return Path(resources.files(__package__) / name)
