"""Packaged configs and published sparsity profiles.

``resolve("vgg5_cifar10")`` returns the path of a shipped file when the
argument is not an existing path, so every CLI subcommand runs offline from
bundled fixtures alone.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

_ROOT = resources.files("spikecost") / "data"
_SUBDIRS = {".ini": "configs", ".json": "profiles"}


def fixture(name: str) -> Path:
    """Path of a bundled file, e.g. ``fixture("profiles/vgg5_cifar10_snn.json")``."""
    return Path(str(_ROOT / name))


def available() -> list[str]:
    out = []
    for sub in ("configs", "profiles"):
        out += sorted(f"{sub}/{p.name}" for p in Path(str(_ROOT / sub)).iterdir() if p.is_file())
    return out


def resolve(arg: str | Path, suffix: str) -> Path:
    """An existing path as-is; otherwise a bundled fixture of that stem; otherwise the raw path."""
    p = Path(arg)
    if p.exists():
        return p
    stem = p.name[:-len(suffix)] if p.name.endswith(suffix) else p.name
    candidate = fixture(f"{_SUBDIRS[suffix]}/{stem}{suffix}")
    return candidate if candidate.exists() else p


DEFAULT_HW = fixture("configs/hw_default.ini")
DEFAULT_ENERGY = fixture("configs/energy_default.ini")
