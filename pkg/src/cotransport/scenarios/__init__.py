"""Bundled scenario files."""

from pathlib import Path
from typing import Optional

_HERE = Path(__file__).parent


def scenario_path(name: str) -> Optional[Path]:
    """Path of a bundled scenario by bare name, or None."""
    p = _HERE / f"{name}.toml"
    return p if p.is_file() else None


def available() -> list[str]:
    return sorted(p.stem for p in _HERE.glob("*.toml"))
