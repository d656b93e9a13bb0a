from pathlib import Path

from speechmoe.logger import get_logger

_logger = get_logger()


def resolve_path(path: str | Path, base: str | Path | None = None) -> Path:
    """Expand `~` and make `path` absolute, relative to `base` when given."""
    path = Path(path).expanduser()
    if base is not None and not path.is_absolute():
        path = Path(base).expanduser() / path
    return path.resolve()


def mkdir(path: str | Path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def ensure_parent(path: str | Path) -> Path:
    """Create the parent directory of a file about to be written."""
    path = Path(path)
    if not path.parent.exists():
        mkdir(path.parent)
        _logger.debug(f"Created directory: {path.parent}")
    return path
