"""Synthetic test patterns with analytically known saddle points.

Two families are generated:

- Chessboards, optionally blurred with a uniform Gaussian. Interior corners
  are saddles for every blur level.
- A perspectively distorted ``sin(u) * sin(v)`` surface. Every point of the
  half-wavelength lattice in the plane is a saddle; the ground truth is the
  projection of those lattice points into the image.

Ground truth is returned as :class:`GroundTruthPoint` rows carrying both plane
``(u, v)`` and image ``(x, y)`` coordinates.
"""

from __future__ import annotations

import math
import sys
import time
from dataclasses import dataclass, field

import numpy as np
from aws_lambda_powertools import Logger
from scipy import ndimage

from src.geometry import Homography, project_many
from src.imageio import GrayImage

logger = Logger(service="saddle", stream=sys.stderr)

# Smallest sinusoid wavelength the 7x7 detector window can resolve.
MIN_WAVELENGTH = 8.0
# Ground-truth saddles closer than this to a border are not reported.
GROUND_TRUTH_MARGIN = 8.0

# Plane -> image map used by default for the sinusoid pattern.
DEFAULT_PERSPECTIVE = np.array(
    [
        [1.0, 0.05, 0.0],
        [0.02, 1.0, 0.0],
        [0.0004, 0.0003, 1.0],
    ]
)


@dataclass(frozen=True)
class GroundTruthPoint:
    """A known saddle: plane coordinates and their image projection."""

    u: float
    v: float
    x: float
    y: float


@dataclass(frozen=True)
class SinusoidSpec:
    """Parameters of the distorted ``sin * sin`` pattern.

    Attributes:
        width, height: Output size in pixels.
        wavelength:    Plane distance per full period along ``u`` and ``v``.
        homography:    Plane -> image map.
        contrast:      Amplitude scale in ``[0, 1]``; 0 renders a flat image.
    """

    width: int
    height: int
    wavelength: float = 32.0
    homography: Homography = field(default_factory=Homography.identity)
    contrast: float = 1.0

    def __post_init__(self) -> None:
        from src.cli import ParameterError

        if self.width < 1 or self.height < 1:
            raise ParameterError(f"Sinusoid size must be positive; got {self.width}x{self.height}")
        if not self.wavelength >= MIN_WAVELENGTH:
            raise ParameterError(
                f"Sinusoid wavelength must be >= {MIN_WAVELENGTH:g} px; got {self.wavelength}"
            )
        if not 0.0 <= self.contrast <= 1.0:
            raise ParameterError(f"Sinusoid contrast must lie in [0, 1]; got {self.contrast}")


def _round_to_gray(values: np.ndarray) -> GrayImage:
    return GrayImage(np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8))


# ---------------------------------------------------------------------------
# Chessboard
# ---------------------------------------------------------------------------


def chessboard(width: int, height: int, square: int) -> GrayImage:
    """Black/white chessboard; pixel ``(x, y)`` is 255 when
    ``x // square + y // square`` is even. The pattern is cropped to the size.
    """
    from src.cli import ParameterError

    if width < 1 or height < 1 or square < 1:
        raise ParameterError(
            f"Chessboard needs positive width, height and square; got {width}x{height}, square {square}"
        )
    cells = (np.arange(height)[:, np.newaxis] // square) + (np.arange(width)[np.newaxis, :] // square)
    return GrayImage(np.where(cells % 2 == 0, 255, 0).astype(np.uint8))


def chessboard_corners(width: int, height: int, square: int) -> list[GroundTruthPoint]:
    """Interior corners of :func:`chessboard`.

    A corner between cells sits at plane coordinates ``(i * square, j * square)``,
    which is the pixel-centre position ``(i * square - 0.5, j * square - 0.5)``.
    """
    from src.cli import ParameterError

    if square < 1:
        raise ParameterError(f"Chessboard square must be >= 1; got {square}")
    return [
        GroundTruthPoint(u=float(u), v=float(v), x=u - 0.5, y=v - 0.5)
        for v in range(square, height, square)
        for u in range(square, width, square)
    ]


# ---------------------------------------------------------------------------
# Blur
# ---------------------------------------------------------------------------


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Sampled Gaussian truncated at ``ceil(3 * sigma)``, normalised to sum 1."""
    radius = math.ceil(3.0 * sigma)
    taps = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(taps**2) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def gaussian_blur(image: GrayImage, sigma: float) -> GrayImage:
    """Separable Gaussian blur with edge replication; ``sigma == 0`` is the identity.

    Raises:
        ParameterError: ``sigma < 0``.
    """
    from src.cli import ParameterError

    if not sigma >= 0.0:
        raise ParameterError(f"Blur sigma must be >= 0; got {sigma}")
    if sigma == 0.0:
        return image
    kernel = gaussian_kernel(sigma)
    rows = ndimage.correlate1d(image.data.astype(np.float64), kernel, axis=1, mode="nearest")
    return _round_to_gray(ndimage.correlate1d(rows, kernel, axis=0, mode="nearest"))


def blur_sequence(width: int, height: int, square: int, sigmas) -> list[GrayImage]:
    """The chessboard blurred once per entry of ``sigmas``."""
    board = chessboard(width, height, square)
    return [gaussian_blur(board, float(sigma)) for sigma in sigmas]


# ---------------------------------------------------------------------------
# Sinusoid
# ---------------------------------------------------------------------------


def _surface(spec: SinusoidSpec, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    omega = 2.0 * math.pi / spec.wavelength
    return 127.5 + 127.5 * spec.contrast * np.sin(omega * u) * np.sin(omega * v)


def sinusoid_intensity(spec: SinusoidSpec, x: float, y: float) -> float:
    """Unquantised intensity of the pattern at image position ``(x, y)``."""
    u, v = project_many(spec.homography.inverse(), [x], [y])
    return float(_surface(spec, u, v)[0])


def _sinusoid_saddles(spec: SinusoidSpec) -> list[GroundTruthPoint]:
    w, h = spec.width, spec.height
    corners_x = np.array([-0.5, w - 0.5, w - 0.5, -0.5])
    corners_y = np.array([-0.5, -0.5, h - 0.5, h - 0.5])
    cu, cv = project_many(spec.homography.inverse(), corners_x, corners_y)

    step = spec.wavelength / 2.0
    js = np.arange(math.floor(cu.min() / step), math.ceil(cu.max() / step) + 1)
    ks = np.arange(math.floor(cv.min() / step), math.ceil(cv.max() / step) + 1)
    grid_k, grid_j = np.meshgrid(ks, js, indexing="ij")
    u = (grid_j * step).ravel()
    v = (grid_k * step).ravel()
    x, y = project_many(spec.homography, u, v)

    inside = (
        (x >= GROUND_TRUTH_MARGIN)
        & (x <= w - 1 - GROUND_TRUTH_MARGIN)
        & (y >= GROUND_TRUTH_MARGIN)
        & (y <= h - 1 - GROUND_TRUTH_MARGIN)
    )
    return [
        GroundTruthPoint(u=float(u[i]), v=float(v[i]), x=float(x[i]), y=float(y[i]))
        for i in np.flatnonzero(inside)
    ]


def sinusoid(spec: SinusoidSpec) -> tuple[GrayImage, list[GroundTruthPoint]]:
    """Render the pattern and list its saddles.

    Each pixel ``(x, y)`` is mapped through the inverse homography to plane
    coordinates and quantised with round-half-up. Saddles are the plane points
    ``(j * wavelength / 2, k * wavelength / 2)``; only projections at least
    8 px inside the image are returned, in plane row-major order.

    Raises:
        GeometryError: A pixel maps to infinity in the plane.
    """
    start = time.perf_counter()
    ys, xs = np.mgrid[0 : spec.height, 0 : spec.width]
    u, v = project_many(spec.homography.inverse(), xs, ys)
    image = _round_to_gray(_surface(spec, u, v))
    saddles = _sinusoid_saddles(spec)
    logger.debug(
        "Sinusoid rendered",
        extra={
            "width": spec.width,
            "height": spec.height,
            "wavelength": spec.wavelength,
            "contrast": spec.contrast,
            "saddles": len(saddles),
            "duration_ms": round((time.perf_counter() - start) * 1000, 3),
        },
    )
    return image, saddles
