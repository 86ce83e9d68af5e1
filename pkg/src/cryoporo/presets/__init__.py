"""Named scenario presets shipped with the package.

Presets are ordinary configuration files; the CLI accepts them as
``--config preset:<name>`` and the test suite loads them by name.
"""

from __future__ import annotations

from pathlib import Path

from ..errors import ConfigError

__all__ = ["preset_path", "available_presets"]

_BASE = Path(__file__).resolve().parent


def available_presets() -> list:
    return sorted(p.stem for p in _BASE.glob("*.ini"))


def preset_path(name: str) -> Path:
    path = _BASE / f"{name}.ini"
    if not path.is_file():
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(available_presets())}")
    return path
