"""Byte-source protocol, factory, and per-process cache.

Every file the tools read or write (images, homographies, keypoint lists,
reports, coverage masks) goes through a :class:`ByteSource`. A location is
either a local filesystem path or an ``s3://<bucket>/<key>`` URI.

Usage::

    from src.sources import read_bytes, write_bytes

    payload = read_bytes("s3://datasets/graf/img1.pgm")
    write_bytes("out/keypoints.csv", b"x,y,scale,level,response\\n")

Each source is initialised once per process and reused, so the S3 client and
its connection pool are constructed only on first use.
"""

from __future__ import annotations

import sys
from typing import Protocol, runtime_checkable

from aws_lambda_powertools import Logger

logger = Logger(service="saddle", stream=sys.stderr)

S3_SCHEME = "s3://"

# ---------------------------------------------------------------------------
# Source protocol
# ---------------------------------------------------------------------------


@runtime_checkable
class ByteSource(Protocol):
    """Structural interface for byte storage backends."""

    def read(self, location: str) -> bytes:
        """Return the full contents stored at ``location``.

        Raises:
            SourceError: If the object cannot be read.
        """
        ...  # pragma: no cover

    def write(self, location: str, payload: bytes) -> None:
        """Store ``payload`` at ``location``, replacing existing content.

        Raises:
            SourceError: If the object cannot be written.
        """
        ...  # pragma: no cover


# ---------------------------------------------------------------------------
# Process cache
# ---------------------------------------------------------------------------

# Keys are scheme names ("file", "s3"). Instances are created lazily on first
# use and reused for every later call in the same process.
_cache: dict[str, ByteSource] = {}


def scheme_of(location: str) -> str:
    """Return ``"s3"`` for S3 URIs and ``"file"`` for everything else."""
    return "s3" if location.startswith(S3_SCHEME) else "file"


def get_source(location: str) -> ByteSource:
    """Return the cached source able to handle ``location``.

    Args:
        location: Local path or ``s3://`` URI.

    Returns:
        A :class:`ByteSource`-compatible instance.
    """
    name = scheme_of(location)
    if name not in _cache:
        _cache[name] = _create(name)
        logger.debug("Byte source created and cached", extra={"scheme": name})
    return _cache[name]


def _create(name: str) -> ByteSource:
    if name == "s3":
        from src.sources.s3 import S3Source

        return S3Source()

    from src.sources.local import LocalSource

    return LocalSource()


def read_bytes(location: str) -> bytes:
    """Read ``location`` through the matching source."""
    return get_source(location).read(location)


def write_bytes(location: str, payload: bytes) -> None:
    """Write ``payload`` to ``location`` through the matching source."""
    get_source(location).write(location, payload)


def join_location(directory: str, name: str) -> str:
    """Join a directory-like location and a file name for either scheme."""
    if not directory:
        return name
    return directory.rstrip("/") + "/" + name
