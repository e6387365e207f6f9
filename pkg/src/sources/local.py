"""Local filesystem byte source."""

from __future__ import annotations

import sys
from pathlib import Path

from aws_lambda_powertools import Logger

logger = Logger(service="saddle", stream=sys.stderr)


class LocalSource:
    """Reads and writes plain files; parent directories are created on write."""

    def read(self, location: str) -> bytes:
        from src.cli import SourceError

        path = Path(location)
        try:
            return path.read_bytes()
        except FileNotFoundError as exc:
            logger.error("File not found", extra={"path": location})
            raise SourceError(f"File not found: {location}") from exc
        except OSError as exc:
            logger.error(
                "Failed to read file",
                extra={"path": location, "error": str(exc)},
                exc_info=True,
            )
            raise SourceError(f"Failed to read {location}: {exc.strerror or exc}") from exc

    def write(self, location: str, payload: bytes) -> None:
        from src.cli import SourceError

        path = Path(location)
        try:
            if path.parent and not path.parent.exists():
                path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(payload)
        except OSError as exc:
            logger.error(
                "Failed to write file",
                extra={"path": location, "error": str(exc)},
                exc_info=True,
            )
            raise SourceError(f"Failed to write {location}: {exc.strerror or exc}") from exc
        logger.debug("File written", extra={"path": location, "size": len(payload)})
