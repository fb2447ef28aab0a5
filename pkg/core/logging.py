"""Logging configuration using loguru.

Console records go to stderr so command output on stdout (tables, CSV) stays
clean. Records carry a ``stage`` extra; pipeline stages bind it, everything
else logs as ``-``.
"""

import sys
from pathlib import Path
from typing import Optional, Union

from loguru import logger

LOG_FORMAT = (
    "<level>{level: <8}</level> | "
    "<magenta>{extra[stage]: <9}</magenta> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> | "
    "<level>{message}</level>"
)

FILE_FORMAT = "{time:YYYY-MM-DD HH:mm:ss.SSS} | {level: <8} | {extra[stage]: <9} | {name}:{function}:{line} | {message}"

logger.remove()
logger.configure(extra={"stage": "-"})

_console_handler_id: int = logger.add(sys.stderr, level="INFO", format=LOG_FORMAT, colorize=True)
_file_handler: Optional[tuple[Path, int]] = None


def configure_debug_logging(enabled: bool = False) -> None:
    """Switch the console between INFO and DEBUG.

    DEBUG includes one line per Levenberg-Marquardt step and per stage
    registration.
    """
    global _console_handler_id
    logger.remove(_console_handler_id)
    _console_handler_id = logger.add(
        sys.stderr, level="DEBUG" if enabled else "INFO", format=LOG_FORMAT, colorize=True
    )


def add_file_logging(file_path: Union[str, Path], level: str = "DEBUG") -> int:
    """Mirror records to a rotating file.

    Calling again with the same path keeps the existing sink; a new path
    replaces it.

    Returns:
        loguru handler id, usable with logger.remove()
    """
    global _file_handler
    path = Path(file_path)
    if _file_handler is not None:
        if _file_handler[0] == path:
            return _file_handler[1]
        logger.remove(_file_handler[1])
    path.parent.mkdir(parents=True, exist_ok=True)
    handler_id = logger.add(
        str(path),
        level=level,
        format=FILE_FORMAT,
        colorize=False,
        rotation="50 MB",
        retention=5,
    )
    _file_handler = (path, handler_id)
    return handler_id


def remove_file_logging() -> None:
    """Drop the file sink added by add_file_logging, if any."""
    global _file_handler
    if _file_handler is not None:
        logger.remove(_file_handler[1])
        _file_handler = None
