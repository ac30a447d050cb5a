"""Bundled reference data: the sorted-confusion tables, arrival events, the
40-row traversal-speed table, and hand-built detection logs. The test suite
and the CLI walkthroughs both run against these files."""

from __future__ import annotations

from importlib import resources
from pathlib import Path


def fixture_path(name: str) -> Path:
    """Filesystem path of a bundled data file, e.g. ``"speeds.csv"`` or
    ``"logs/slow_female.jsonl"``."""
    path = Path(str(resources.files(__package__).joinpath(name)))
    if not path.is_file():
        raise FileNotFoundError(f"no bundled fixture named {name!r}")
    return path


def fixture_text(name: str) -> str:
    return fixture_path(name).read_text(encoding="utf-8")
