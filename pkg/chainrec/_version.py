"""Package version from pyproject.toml (single source of truth)."""

from __future__ import annotations

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path

PYPROJECT_PATH = Path(__file__).resolve().parent.parent / "pyproject.toml"


def read_pyproject_version(path: Path = PYPROJECT_PATH) -> str:
    """Return [project].version from the repo-root pyproject.toml, or "dev"."""
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except (OSError, tomllib.TOMLDecodeError):
        return "dev"
    v = data.get("project", {}).get("version")
    return str(v) if v else "dev"


PACKAGE_VERSION = read_pyproject_version()
