from dataclasses import dataclass
from typing import Optional


@dataclass
class CommandResult:
    """Standard result object for CLI commands."""
    success: bool
    message: str
    data: Optional[dict] = None
    error: Optional[str] = None
    exit_code: int = 0
