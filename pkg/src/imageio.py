"""Grayscale raster type, PGM codec, and the detection scale pyramid.

A :class:`GrayImage` wraps a read-only ``uint8`` array of shape
``(height, width)``. Images are read and written as binary (P5) or ASCII (P2)
PGM with ``maxval <= 255``; any location accepted by :mod:`src.sources`
(local path or ``s3://`` URI) works for both directions.

Pyramid levels are produced by bilinear resampling with pixel-center
alignment: output pixel ``o`` samples the source at ``(o + 0.5) * factor - 0.5``,
clamped to the image. Every rounding in this module is round-half-up.
"""

from __future__ import annotations

import math
import re
import sys
import time
from dataclasses import dataclass, field

import numpy as np
from aws_lambda_powertools import Logger

from src.sources import read_bytes, write_bytes

logger = Logger(service="saddle", stream=sys.stderr)

# Smallest side length a pyramid level may have: the 7x7 ring window plus the
# NMS margin.
MIN_LEVEL_SIZE = 16

_PGM_COMMENT = re.compile(rb"#[^\n]*")

# ---------------------------------------------------------------------------
# Data classes
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit single-channel raster.

    Attributes:
        data: Row-major intensities, shape ``(height, width)``, dtype ``uint8``.
              The array is a private read-only copy.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        from src.cli import ParameterError

        arr = np.asarray(self.data)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ParameterError(
                f"GrayImage data must be a non-empty 2-D array; got shape {arr.shape}."
            )
        if arr.dtype != np.uint8:
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise ParameterError("GrayImage intensities must lie in [0, 255].")
            if np.issubdtype(arr.dtype, np.floating) and not np.all(arr == np.floor(arr)):
                raise ParameterError("GrayImage intensities must be integers.")
        frozen = np.array(arr, dtype=np.uint8, copy=True, order="C")
        frozen.flags.writeable = False
        object.__setattr__(self, "data", frozen)

    @classmethod
    def from_values(cls, width: int, height: int, values) -> "GrayImage":
        """Build an image from a flat row-major sequence of intensities."""
        from src.cli import ParameterError

        flat = np.asarray(values)
        if flat.size != width * height:
            raise ParameterError(
                f"Expected {width * height} intensities for {width}x{height}; got {flat.size}."
            )
        return cls(flat.reshape(height, width))

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class Pyramid:
    """Progressively downscaled copies of a source image.

    Attributes:
        levels:       ``levels[0]`` is the source image; each later level is the
                      previous one downsampled by ``scale_factor``.
        scale_factor: Ratio between consecutive levels (> 1).
        level_scales: ``scale_factor ** n`` for each level ``n``.
    """

    levels: tuple[GrayImage, ...]
    scale_factor: float
    level_scales: tuple[float, ...] = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(
            self,
            "level_scales",
            tuple(self.scale_factor**n for n in range(len(self.levels))),
        )

    def __len__(self) -> int:
        return len(self.levels)


def round_half_up(value: float) -> int:
    """Round to the nearest integer, halves going up."""
    return int(math.floor(value + 0.5))


# ---------------------------------------------------------------------------
# PGM codec
# ---------------------------------------------------------------------------


def _header_tokens(payload: bytes, count: int) -> tuple[list[bytes], int]:
    """Return up to ``count`` whitespace-separated header tokens and the offset
    just past the last one. ``#`` comments run to the end of the line."""
    tokens: list[bytes] = []
    pos = 0
    size = len(payload)
    while len(tokens) < count:
        while pos < size:
            ch = payload[pos : pos + 1]
            if ch.isspace():
                pos += 1
            elif ch == b"#":
                newline = payload.find(b"\n", pos)
                pos = size if newline < 0 else newline + 1
            else:
                break
        start = pos
        while pos < size:
            ch = payload[pos : pos + 1]
            if ch.isspace() or ch == b"#":
                break
            pos += 1
        if start == pos:
            break
        tokens.append(payload[start:pos])
    return tokens, pos


def _header_int(token: bytes, name: str, location: str, lowest: int) -> int:
    from src.cli import FormatError

    try:
        value = int(token.decode("ascii"))
    except (UnicodeDecodeError, ValueError) as exc:
        raise FormatError(f"{location}: PGM {name} is not an integer: {token!r}") from exc
    if value < lowest:
        raise FormatError(f"{location}: PGM {name} must be >= {lowest}; got {value}")
    return value


def decode_pgm(payload: bytes, location: str = "<bytes>") -> GrayImage:
    """Parse a P5 or P2 PGM payload.

    Args:
        payload:  Complete file contents.
        location: Used only in error messages.

    Returns:
        The decoded :class:`GrayImage`, pixel values exactly as stored.

    Raises:
        FormatError: Malformed header, unsupported maxval, or truncated data.
            The message names the offending field.
    """
    from src.cli import FormatError

    fields = ("magic", "width", "height", "maxval")
    tokens, offset = _header_tokens(payload, len(fields))
    if len(tokens) < len(fields):
        missing = fields[len(tokens)]
        raise FormatError(f"{location}: PGM header is missing the {missing} field")

    magic = tokens[0]
    if magic not in (b"P5", b"P2"):
        raise FormatError(f"{location}: PGM magic must be P5 or P2; got {magic!r}")
    width = _header_int(tokens[1], "width", location, 1)
    height = _header_int(tokens[2], "height", location, 1)
    maxval = _header_int(tokens[3], "maxval", location, 1)
    if maxval > 255:
        raise FormatError(f"{location}: PGM maxval {maxval} exceeds 255 (16-bit PGM is unsupported)")

    count = width * height
    if magic == b"P5":
        # Exactly one whitespace byte separates maxval from the raster.
        raster = payload[offset + 1 : offset + 1 + count]
        if len(raster) < count:
            raise FormatError(
                f"{location}: PGM data truncated: expected {count} bytes, got {len(raster)}"
            )
        values = np.frombuffer(raster, dtype=np.uint8)
    else:
        words = _PGM_COMMENT.sub(b"", payload[offset:]).split()
        if len(words) < count:
            raise FormatError(
                f"{location}: PGM data truncated: expected {count} values, got {len(words)}"
            )
        try:
            values = np.array([int(w) for w in words[:count]], dtype=np.int64)
        except ValueError as exc:
            raise FormatError(f"{location}: PGM data contains a non-integer value") from exc

    if values.size and int(values.max()) > maxval:
        raise FormatError(f"{location}: PGM data value {int(values.max())} exceeds maxval {maxval}")
    if values.size and int(values.min()) < 0:
        raise FormatError(f"{location}: PGM data contains a negative value")

    return GrayImage(values.reshape(height, width))


def encode_pgm(image: GrayImage) -> bytes:
    """Serialize ``image`` as binary P5 PGM with maxval 255."""
    header = f"P5\n{image.width} {image.height}\n255\n".encode("ascii")
    return header + image.data.tobytes()


def load_pgm(location: str) -> GrayImage:
    """Read a PGM image from a local path or ``s3://`` URI.

    Raises:
        SourceError: The location cannot be read.
        FormatError: The content is not a supported PGM.
    """
    image = decode_pgm(read_bytes(location), location)
    logger.debug(
        "PGM loaded",
        extra={"location": location, "width": image.width, "height": image.height},
    )
    return image


def save_pgm(image: GrayImage, location: str) -> None:
    """Write ``image`` as P5 PGM; ``load_pgm`` returns it bit-exactly."""
    write_bytes(location, encode_pgm(image))


# ---------------------------------------------------------------------------
# Resampling and pyramid
# ---------------------------------------------------------------------------


def _sample_positions(out_size: int, factor: float, in_size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return left taps, right taps and fractional weights along one axis."""
    coords = (np.arange(out_size, dtype=np.float64) + 0.5) * factor - 0.5
    coords = np.clip(coords, 0.0, float(in_size - 1))
    lo = np.floor(coords).astype(np.intp)
    hi = np.minimum(lo + 1, in_size - 1)
    return lo, hi, coords - lo


def downsample(image: GrayImage, factor: float) -> GrayImage:
    """Shrink ``image`` by ``factor`` with bilinear interpolation.

    Output dimensions are ``round(width / factor)`` x ``round(height / factor)``.
    The interpolated value is formed as the top-left tap plus the rounded
    weighted difference to the other taps, which equals round-half-up of the
    usual 4-tap formula and commutes exactly with adding a constant.

    Raises:
        ParameterError: ``factor <= 1`` or the output would be empty.
    """
    from src.cli import ParameterError

    if not factor > 1.0:
        raise ParameterError(f"Downsampling factor must be > 1; got {factor}")
    out_w = round_half_up(image.width / factor)
    out_h = round_half_up(image.height / factor)
    if out_w < 1 or out_h < 1:
        raise ParameterError(
            f"Downsampling {image.width}x{image.height} by {factor} leaves no pixels."
        )

    src = image.data.astype(np.int32)
    x0, x1, fx = _sample_positions(out_w, factor, image.width)
    y0, y1, fy = _sample_positions(out_h, factor, image.height)

    a00 = src[np.ix_(y0, x0)]
    a10 = src[np.ix_(y0, x1)]
    a01 = src[np.ix_(y1, x0)]
    a11 = src[np.ix_(y1, x1)]
    wx = fx[np.newaxis, :]
    wy = fy[:, np.newaxis]

    delta = wx * (a10 - a00) + wy * (a01 - a00) + (wx * wy) * (a11 - a10 - a01 + a00)
    out = a00 + np.floor(delta + 0.5).astype(np.int32)
    return GrayImage(out)


def level_size(size: int, factor: float) -> int:
    """Side length of the next pyramid level."""
    return round_half_up(size / factor)


def build_pyramid(image: GrayImage, n_levels: int, factor: float) -> Pyramid:
    """Build up to ``n_levels`` levels, stopping before any level whose smaller
    side would drop under :data:`MIN_LEVEL_SIZE`.

    Raises:
        ParameterError: ``n_levels < 1`` or ``factor <= 1``.
    """
    from src.cli import ParameterError

    if n_levels < 1:
        raise ParameterError(f"Pyramid needs at least one level; got {n_levels}")
    if not factor > 1.0:
        raise ParameterError(f"Pyramid scale factor must be > 1; got {factor}")

    start = time.perf_counter()
    levels = [image]
    while len(levels) < n_levels:
        prev = levels[-1]
        if min(level_size(prev.width, factor), level_size(prev.height, factor)) < MIN_LEVEL_SIZE:
            break
        levels.append(downsample(prev, factor))

    logger.debug(
        "Pyramid built",
        extra={
            "levels": len(levels),
            "requested_levels": n_levels,
            "scale_factor": factor,
            "duration_ms": round((time.perf_counter() - start) * 1000, 3),
        },
    )
    return Pyramid(levels=tuple(levels), scale_factor=float(factor))
