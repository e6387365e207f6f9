"""Environment-variable-based configuration for the Saddle detector tools.

All settings are read from environment variables on first use and cached as an
immutable :class:`Config` dataclass for the lifetime of the process.

Environment Variables:
    SADDLE_THREADS: Default worker count for detection (``--threads``).
                    Positive integer. Defaults to ``1``; unparsable or
                    non-positive values fall back to ``1``.
    LOG_LEVEL:      Powertools log level (``DEBUG``, ``INFO``, …).
                    Defaults to ``"INFO"``.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass

from aws_lambda_powertools import Logger

logger = Logger(service="saddle", stream=sys.stderr)

# ---------------------------------------------------------------------------
# Config dataclass
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Config:
    """Process-wide detector settings taken from the environment.

    Attributes:
        threads:   Default number of detection worker threads.
        log_level: Powertools log level string.
    """

    threads: int
    log_level: str


# ---------------------------------------------------------------------------
# Process cache
# ---------------------------------------------------------------------------

# Initialized once per process; later calls reuse this instance without
# re-reading the environment.
_config: Config | None = None


def get_config() -> Config:
    """Return the process :class:`Config`, reading the environment once.

    Returns:
        The shared :class:`Config` instance.
    """
    global _config
    if _config is None:
        _config = _load_config()
        logger.debug(
            "Saddle settings read",
            extra={"threads": _config.threads, "log_level": _config.log_level},
        )
    return _config


def _load_config() -> Config:
    """Read all environment variables and construct a :class:`Config`."""
    raw_threads = os.environ.get("SADDLE_THREADS", "1")
    try:
        threads = int(raw_threads)
    except ValueError:
        logger.warning(
            "Ignoring unparsable SADDLE_THREADS",
            extra={"value": raw_threads},
        )
        threads = 1
    if threads < 1:
        threads = 1

    return Config(
        threads=threads,
        log_level=os.environ.get("LOG_LEVEL", "INFO").upper(),
    )
