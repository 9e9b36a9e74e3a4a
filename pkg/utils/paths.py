"""Path utilities and atomic writes."""
import os
import tempfile
from pathlib import Path
from typing import Iterable, List, Optional

from .errors import InvalidPathError


def validate_path(path: str, must_be_dir: bool = False) -> Path:
    """
    Resolve an input batch, artifact or parameter file (or a directory of them).

    Args:
        path: File or directory named on the command line
        must_be_dir: Reject anything but a directory

    Returns:
        The existing Path

    Raises:
        InvalidPathError: If nothing exists at the path or it has the wrong kind
    """
    try:
        p = Path(path)
        if not p.exists():
            raise InvalidPathError(f"Path does not exist: {path}")
        if must_be_dir and not p.is_dir():
            raise InvalidPathError(f"Path is not a directory: {path}")
        return p
    except (OSError, ValueError) as e:
        raise InvalidPathError(f"Invalid path '{path}': {str(e)}")


def collect_files(paths: Iterable[str], suffix: str) -> List[Path]:
    """Expand files and directories into a sorted list of files with suffix."""
    files: List[Path] = []
    for raw in paths:
        p = validate_path(raw)
        if p.is_dir():
            files.extend(f for f in p.iterdir() if f.is_file() and f.suffix.lower() == suffix)
        else:
            files.append(p)
    return sorted(set(files), key=lambda x: x.name)


def resolve_output_dir(configured: Optional[str], override: Optional[str] = None) -> Path:
    """Pick the output directory (environment override wins) and create it."""
    chosen = override or configured
    if not chosen:
        raise InvalidPathError("No output directory configured")
    out = Path(chosen)
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_atomic(path: Path, text: str) -> None:
    """Write text to path via a temporary file and rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
