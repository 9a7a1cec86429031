"""Application-wide logging setup.

Writes to <app dir>/clusterpca.log so long simulation and backtest runs
leave a trace even when nothing is printed to the terminal.
"""

import logging
import os
import sys

from .constants import app_dir

logger = logging.getLogger("clusterpca")
logger.setLevel(logging.DEBUG)

_FORMAT = logging.Formatter(
    "%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    datefmt="%H:%M:%S",
)

# File handler, overwritten on each launch
try:
    os.makedirs(app_dir(), exist_ok=True)
    _fh = logging.FileHandler(os.path.join(app_dir(), "clusterpca.log"), mode="w", encoding="utf-8")
    _fh.setLevel(logging.DEBUG)
    _fh.setFormatter(_FORMAT)
    logger.addHandler(_fh)
except OSError:
    logger.addHandler(logging.NullHandler())

_console: logging.Handler | None = None


def enable_console(verbose: bool = False) -> None:
    """Mirror log records to stderr (used by the command line)."""
    global _console
    level = logging.DEBUG if verbose else logging.INFO
    if _console is None:
        _console = logging.StreamHandler(sys.stderr)
        _console.setFormatter(_FORMAT)
        logger.addHandler(_console)
    _console.setLevel(level)
