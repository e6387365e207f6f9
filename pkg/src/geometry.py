"""Planar homographies: loading, projection, inversion.

Homography files use the Oxford affine-dataset layout: nine whitespace
separated reals, row-major. All arithmetic is float64.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass

import numpy as np
from aws_lambda_powertools import Logger

from src.sources import read_bytes

logger = Logger(service="saddle", stream=sys.stderr)

# |det| of the max-normalised matrix below which H is treated as singular.
SINGULAR_TOLERANCE = 1e-12
# |w'| below which a projected point is at infinity.
INFINITY_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class Homography:
    """Nonsingular 3x3 projective map.

    Attributes:
        matrix: Read-only ``float64`` array of shape ``(3, 3)``.
    """

    matrix: np.ndarray

    def __post_init__(self) -> None:
        """Validate and freeze the matrix.

        Raises:
            ParameterError: Wrong shape, non-finite entries, or singular.
        """
        from src.cli import ParameterError

        arr = np.array(self.matrix, dtype=np.float64, copy=True)
        if arr.shape != (3, 3):
            raise ParameterError(f"Homography must be 3x3; got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ParameterError("Homography entries must be finite.")
        peak = np.max(np.abs(arr))
        if peak == 0.0 or abs(np.linalg.det(arr / peak)) < SINGULAR_TOLERANCE:
            raise ParameterError("Homography is singular.")
        arr.flags.writeable = False
        object.__setattr__(self, "matrix", arr)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, tx: float, ty: float) -> "Homography":
        return cls(np.array([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]]))

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Homography):
            return NotImplemented
        return bool(np.array_equal(self.matrix, other.matrix))

    __hash__ = None  # type: ignore[assignment]


def parse_homography(text: str, location: str = "<text>") -> Homography:
    """Parse nine whitespace-separated reals into a :class:`Homography`.

    Raises:
        FormatError:    Wrong token count or a non-numeric token.
        ParameterError: The matrix is singular.
    """
    from src.cli import FormatError

    tokens = text.split()
    if len(tokens) != 9:
        raise FormatError(f"{location}: homography needs 9 values; got {len(tokens)}")
    try:
        values = [float(t) for t in tokens]
    except ValueError as exc:
        raise FormatError(f"{location}: homography contains a non-numeric value") from exc
    return Homography(np.asarray(values, dtype=np.float64).reshape(3, 3))


def load_homography(location: str) -> Homography:
    """Read a homography file from a local path or ``s3://`` URI.

    Raises:
        SourceError:    The file cannot be read.
        FormatError:    Wrong token count, non-numeric or non-text content.
        ParameterError: The matrix is singular.
    """
    from src.cli import FormatError

    payload = read_bytes(location)
    try:
        text = payload.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{location}: homography file is not text") from exc
    homography = parse_homography(text, location)
    logger.debug("Homography loaded", extra={"location": location})
    return homography


def project_many(homography: Homography, xs, ys) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`project`.

    Raises:
        GeometryError: Any point maps to infinity.
    """
    from src.cli import GeometryError

    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    h = homography.matrix
    w = h[2, 0] * x + h[2, 1] * y + h[2, 2]
    if np.any(np.abs(w) < INFINITY_TOLERANCE):
        raise GeometryError("Point maps to infinity under the homography.")
    return (h[0, 0] * x + h[0, 1] * y + h[0, 2]) / w, (h[1, 0] * x + h[1, 1] * y + h[1, 2]) / w


def project(homography: Homography, x: float, y: float) -> tuple[float, float]:
    """Map ``(x, y)`` through ``homography``.

    Raises:
        GeometryError: The homogeneous coordinate ``w'`` is (near) zero.
    """
    px, py = project_many(homography, [x], [y])
    return float(px[0]), float(py[0])
