"""Saddle keypoint detection over a scale pyramid.

Pipeline per pyramid level:
    1. :func:`detect_level`: inner-ring test on every border-interior pixel,
       central intensity ``rho``, outer-ring labels, automaton test, response.
    2. :func:`nms`: 3x3 non-maxima suppression within the level.
    3. :func:`refine`: response-weighted 3x3 centroid.
    4. :func:`detect`: maps level coordinates to the base image, merges levels,
       orders by response and applies the optional feature budget.

Levels are independent and may run on a thread pool; the merged output does
not depend on the number of workers.

The scalar operations (:func:`inner_test`, :func:`label_outer_ring`,
:func:`outer_test`, :func:`response`) share their arithmetic with the
vectorised level pass, so a single pixel always gets the same verdict either
way.
"""

from __future__ import annotations

import enum
import sys
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass

import numpy as np
from aws_lambda_powertools import Logger

from src.automaton import accepts_many, decode, encode
from src.imageio import MIN_LEVEL_SIZE, GrayImage, Pyramid, build_pyramid, round_half_up

logger = Logger(service="saddle", stream=sys.stderr)

# Threshold in milliseconds above which a full detection is logged at INFO.
_DETECT_DURATION_LOG_THRESHOLD_MS = 100

# Outer ring radius; pixels closer than this to a border are never candidates.
BORDER = 3

# (dx, dy) offsets. Inner plus order: N, E, S, W.
INNER_PLUS: tuple[tuple[int, int], ...] = ((0, -2), (2, 0), (0, 2), (-2, 0))
INNER_CROSS: tuple[tuple[int, int], ...] = ((2, -2), (2, 2), (-2, 2), (-2, -2))
OUTER_RING: tuple[tuple[int, int], ...] = (
    (0, -3), (1, -3), (2, -2), (3, -1),
    (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1),
    (-3, 0), (-3, -1), (-2, -2), (-1, -3),
)

# The cross offsets are every fourth outer-ring entry starting at index 2.
_CROSS_IN_RING = slice(2, None, 4)

# ---------------------------------------------------------------------------
# Data classes
# ---------------------------------------------------------------------------


class Shape(str, enum.Enum):
    """Inner-ring quadruples."""

    PLUS = "plus"
    CROSS = "cross"


@dataclass(frozen=True)
class RingGeometry:
    """Pixel offsets of the two concentric rings, as ``(dx, dy)`` pairs.

    ``outer`` lists the radius-3 discrete circle in cyclic order starting at
    ``(0, -3)``; its four diagonal entries are the ``inner_cross`` offsets.
    """

    inner_plus: tuple[tuple[int, int], ...] = INNER_PLUS
    inner_cross: tuple[tuple[int, int], ...] = INNER_CROSS
    outer: tuple[tuple[int, int], ...] = OUTER_RING


RING_GEOMETRY = RingGeometry()


@dataclass(frozen=True)
class DetectorParams:
    """Detector settings.

    Attributes:
        epsilon:      Half-width of the ``s`` band around ``rho`` (0–127).
        n_levels:     Requested pyramid levels (>= 1).
        scale_factor: Ratio between pyramid levels (> 1).
        max_features: Optional global cap on the number of keypoints.
    """

    epsilon: float = 1.0
    n_levels: int = 6
    scale_factor: float = 1.3
    max_features: int | None = None

    def __post_init__(self) -> None:
        """Validate fields.

        Raises:
            ParameterError: If any field is outside its allowed range.
        """
        from src.cli import ParameterError

        if not 0.0 <= self.epsilon <= 127.0:
            raise ParameterError(f"epsilon must lie in [0, 127]; got {self.epsilon}")
        if int(self.n_levels) != self.n_levels or self.n_levels < 1:
            raise ParameterError(f"n_levels must be an integer >= 1; got {self.n_levels}")
        if not self.scale_factor > 1.0:
            raise ParameterError(f"scale_factor must be > 1; got {self.scale_factor}")
        if self.max_features is not None and (
            int(self.max_features) != self.max_features or self.max_features < 1
        ):
            raise ParameterError(f"max_features must be a positive integer; got {self.max_features}")


@dataclass(frozen=True)
class InnerResult:
    """Outcome of the inner-ring test at one pixel.

    Attributes:
        passed: True when at least one shape shows the alternating pattern.
        shapes: The shapes that passed.
        rho:    Median of the contributing intensities; ``None`` when not passed.
    """

    passed: bool
    shapes: frozenset[Shape]
    rho: float | None


@dataclass(frozen=True)
class RingLabels:
    """Cyclic ``d``/``s``/``l`` labels of the 16 outer-ring pixels."""

    symbols: str

    def __post_init__(self) -> None:
        from src.cli import ParameterError

        if len(self.symbols) != len(OUTER_RING) or set(self.symbols) - set("dsl"):
            raise ParameterError(
                f"RingLabels needs exactly {len(OUTER_RING)} symbols from d, s, l; got {self.symbols!r}"
            )

    @classmethod
    def parse(cls, text: str) -> "RingLabels":
        """Build from a string that may contain grouping spaces."""
        return cls(text.replace(" ", ""))

    def codes(self) -> np.ndarray:
        return encode(self.symbols)


@dataclass(frozen=True)
class Keypoint:
    """A detected saddle point.

    Attributes:
        x, y:     Sub-pixel position in base-image pixel coordinates.
        level:    Pyramid level the point was found on.
        scale:    ``scale_factor ** level``.
        response: Sum of absolute outer-ring deviations from ``rho``.
    """

    x: float
    y: float
    level: int
    scale: float
    response: float

    def level_position(self) -> tuple[float, float]:
        """Position in the coordinates of the keypoint's own pyramid level."""
        return (self.x + 0.5) / self.scale - 0.5, (self.y + 0.5) / self.scale - 0.5


@dataclass(frozen=True, eq=False)
class LevelDetection:
    """Dense response map of one level plus the candidate list.

    Attributes:
        responses:    ``float64`` array shaped like the level; zero except at
                      pixels that passed both ring tests.
        ys, xs:       Candidate coordinates in raster order.
        interior:     Number of border-interior pixels examined.
        inner_passed: Number of those that passed the inner-ring test.
    """

    responses: np.ndarray
    ys: np.ndarray
    xs: np.ndarray
    interior: int
    inner_passed: int

    @property
    def candidates(self) -> list[tuple[int, int, float]]:
        """``(x, y, response)`` triples in raster order."""
        return [
            (int(x), int(y), float(self.responses[y, x]))
            for y, x in zip(self.ys, self.xs)
        ]


# ---------------------------------------------------------------------------
# Shared arithmetic
# ---------------------------------------------------------------------------


def _alternating(a1, a2, b1, b2):
    """Both ``a`` strictly brighter than both ``b``, or the reverse."""
    return (np.minimum(a1, a2) > np.maximum(b1, b2)) | (np.minimum(b1, b2) > np.maximum(a1, a2))


def _shape_tests(plus_vals: np.ndarray, cross_vals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inner tests on gathered ``[k, 4]`` quadruples (plus: N, E, S, W)."""
    plus_ok = _alternating(plus_vals[:, 0], plus_vals[:, 2], plus_vals[:, 1], plus_vals[:, 3])
    cross_ok = _alternating(cross_vals[:, 1], cross_vals[:, 3], cross_vals[:, 0], cross_vals[:, 2])
    return plus_ok, cross_ok


def _central_intensity(
    plus_ok: np.ndarray,
    cross_ok: np.ndarray,
    plus_vals: np.ndarray,
    cross_vals: np.ndarray,
) -> np.ndarray:
    """Median of the 4 or 8 intensities of the passing shapes, as float64."""
    # Middle pair of four values: total minus the extremes.
    plus_med = (plus_vals.sum(axis=1) - plus_vals.min(axis=1) - plus_vals.max(axis=1)) * 0.5
    cross_med = (cross_vals.sum(axis=1) - cross_vals.min(axis=1) - cross_vals.max(axis=1)) * 0.5
    rho = np.where(plus_ok, plus_med, cross_med)
    both = plus_ok & cross_ok
    if np.any(both):
        eight = np.partition(np.concatenate([plus_vals[both], cross_vals[both]], axis=1), (3, 4), axis=1)
        rho[both] = (eight[:, 3] + eight[:, 4]) * 0.5
    return rho


def _label_codes(ring: np.ndarray, rho: np.ndarray, epsilon: float) -> np.ndarray:
    # Integer ring values: I < t iff I < ceil(t), and I > t iff I > floor(t).
    low = np.ceil(rho - epsilon).astype(np.int16)[:, np.newaxis]
    high = np.floor(rho + epsilon).astype(np.int16)[:, np.newaxis]
    # d = 0, s = 1, l = 2: count the thresholds each value clears.
    codes = (ring >= low).astype(np.uint8)
    codes += ring > high
    return codes


def _ring_response(ring: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return np.abs(ring - rho[:, np.newaxis]).sum(axis=1)


def _gather(pixels: np.ndarray, ys: np.ndarray, xs: np.ndarray, offsets) -> np.ndarray:
    """``[k, len(offsets)]`` intensities at ``(xs + dx, ys + dy)``, via flat indices."""
    width = pixels.shape[1]
    steps = np.array([dy * width + dx for dx, dy in offsets], dtype=np.intp)
    return pixels.ravel()[(ys * width + xs)[:, np.newaxis] + steps]


def _check_interior(image: GrayImage, px: int, py: int) -> None:
    from src.cli import ParameterError

    if not (BORDER <= px < image.width - BORDER and BORDER <= py < image.height - BORDER):
        raise ParameterError(
            f"Pixel ({px}, {py}) is closer than {BORDER} px to the border of a "
            f"{image.width}x{image.height} image."
        )


def _point(image: GrayImage, px: int, py: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    _check_interior(image, px, py)
    return image.data.astype(np.int16), np.array([py]), np.array([px])


# ---------------------------------------------------------------------------
# Single-pixel operations
# ---------------------------------------------------------------------------


def inner_test(image: GrayImage, px: int, py: int) -> InnerResult:
    """Alternating-pattern test on the 8 inner-ring pixels around ``(px, py)``.

    Raises:
        ParameterError: The pixel is closer than 3 px to a border.
    """
    pixels, ys, xs = _point(image, px, py)
    plus_vals = _gather(pixels, ys, xs, INNER_PLUS)
    cross_vals = _gather(pixels, ys, xs, INNER_CROSS)
    plus_ok, cross_ok = _shape_tests(plus_vals, cross_vals)
    shapes = frozenset(
        shape for shape, ok in ((Shape.PLUS, plus_ok[0]), (Shape.CROSS, cross_ok[0])) if ok
    )
    if not shapes:
        return InnerResult(passed=False, shapes=shapes, rho=None)
    rho = _central_intensity(plus_ok, cross_ok, plus_vals, cross_vals)[0]
    return InnerResult(passed=True, shapes=shapes, rho=float(rho))


def label_outer_ring(image: GrayImage, px: int, py: int, rho: float, epsilon: float) -> RingLabels:
    """Label each outer-ring pixel ``d`` (< rho-eps), ``s`` (within), ``l`` (> rho+eps)."""
    pixels, ys, xs = _point(image, px, py)
    ring = _gather(pixels, ys, xs, OUTER_RING)
    codes = _label_codes(ring, np.array([float(rho)]), float(epsilon))[0]
    return RingLabels(decode(codes))


def outer_test(labels: RingLabels) -> bool:
    """True iff the cyclic labels form two alternating ``l`` and ``d`` arc pairs."""
    return bool(accepts_many(labels.codes()[np.newaxis, :])[0])


def response(image: GrayImage, px: int, py: int, rho: float) -> float:
    """Sum of ``|rho - I(b_j)|`` over the 16 outer-ring pixels."""
    pixels, ys, xs = _point(image, px, py)
    ring = _gather(pixels, ys, xs, OUTER_RING)
    return float(_ring_response(ring, np.array([float(rho)]))[0])


# ---------------------------------------------------------------------------
# Level pass
# ---------------------------------------------------------------------------


def _inner_pass(image: GrayImage) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inner tests on every border-interior pixel.

    Returns:
        ``(pixels, plus_ok, cross_ok)`` where the boolean maps cover the
        interior window only.
    """
    pixels = image.data.astype(np.int16)
    h, w = pixels.shape

    def window(dx: int, dy: int) -> np.ndarray:
        return pixels[BORDER + dy : h - BORDER + dy, BORDER + dx : w - BORDER + dx]

    north, east, south, west = (window(dx, dy) for dx, dy in INNER_PLUS)
    c_ne, c_se, c_sw, c_nw = (window(dx, dy) for dx, dy in INNER_CROSS)
    plus_ok = _alternating(north, south, east, west)
    cross_ok = _alternating(c_se, c_nw, c_ne, c_sw)
    return pixels, plus_ok, cross_ok


def inner_rejection_rate(image: GrayImage) -> float:
    """Fraction of border-interior pixels rejected by the inner-ring test."""
    from src.cli import ParameterError

    if min(image.width, image.height) <= 2 * BORDER:
        raise ParameterError(f"Image {image.width}x{image.height} has no border-interior pixels.")
    _, plus_ok, cross_ok = _inner_pass(image)
    passed = plus_ok | cross_ok
    return 1.0 - float(np.count_nonzero(passed)) / passed.size


def detect_level(image: GrayImage, params: DetectorParams) -> LevelDetection:
    """Run both ring tests on every border-interior pixel of one level.

    Raises:
        ParameterError: The level is smaller than 16 px on a side.
    """
    from src.cli import ParameterError

    if min(image.width, image.height) < MIN_LEVEL_SIZE:
        raise ParameterError(
            f"Level {image.width}x{image.height} is smaller than {MIN_LEVEL_SIZE}x{MIN_LEVEL_SIZE}."
        )

    pixels, plus_map, cross_map = _inner_pass(image)
    inner_ly, inner_lx = np.nonzero(plus_map | cross_map)
    ys = inner_ly + BORDER
    xs = inner_lx + BORDER

    plus_ok = plus_map[inner_ly, inner_lx]
    cross_ok = cross_map[inner_ly, inner_lx]
    ring = _gather(pixels, ys, xs, OUTER_RING)
    plus_vals = _gather(pixels, ys, xs, INNER_PLUS)
    rho = _central_intensity(plus_ok, cross_ok, plus_vals, ring[:, _CROSS_IN_RING])
    keep = accepts_many(_label_codes(ring, rho, float(params.epsilon)))

    responses = np.zeros(pixels.shape, dtype=np.float64)
    responses[ys[keep], xs[keep]] = _ring_response(ring[keep], rho[keep])

    return LevelDetection(
        responses=responses,
        ys=ys[keep],
        xs=xs[keep],
        interior=int(plus_map.size),
        inner_passed=int(ys.size),
    )


# ---------------------------------------------------------------------------
# Post-processing
# ---------------------------------------------------------------------------

# 8-neighbours split by raster order relative to the centre, as (dy, dx).
_PRECEDING = ((-1, -1), (-1, 0), (-1, 1), (0, -1))
_FOLLOWING = ((0, 1), (1, -1), (1, 0), (1, 1))


def nms(responses: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """3x3 non-maxima suppression on a dense response map.

    A pixel survives when its response is positive, not below any neighbour
    that precedes it in raster order, and strictly above every neighbour that
    follows it; a flat plateau therefore keeps its raster-last pixel.

    Returns:
        ``(ys, xs)`` of the survivors in raster order.
    """
    h, w = responses.shape
    padded = np.pad(responses, 1)
    keep = responses > 0
    for dy, dx in _PRECEDING:
        keep &= responses >= padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
    for dy, dx in _FOLLOWING:
        keep &= responses > padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
    return np.nonzero(keep)


def _refine_many(responses: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    padded = np.pad(responses, 1)
    total = np.zeros(ys.shape, dtype=np.float64)
    sum_x = np.zeros(ys.shape, dtype=np.float64)
    sum_y = np.zeros(ys.shape, dtype=np.float64)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            weight = padded[ys + 1 + dy, xs + 1 + dx]
            total += weight
            sum_x += weight * (xs + dx)
            sum_y += weight * (ys + dy)
    return sum_x / total, sum_y / total


def refine(responses: np.ndarray, px: int, py: int) -> tuple[float, float]:
    """Response-weighted centroid of the 3x3 neighbourhood of a surviving maximum."""
    from src.cli import ParameterError

    if responses[py, px] <= 0:
        raise ParameterError(f"Pixel ({px}, {py}) has no response to refine.")
    rx, ry = _refine_many(responses, np.array([py]), np.array([px]))
    return float(rx[0]), float(ry[0])


# ---------------------------------------------------------------------------
# Full detection
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class _LevelKeypoints:
    level: int
    x: np.ndarray
    y: np.ndarray
    grid_x: np.ndarray
    grid_y: np.ndarray
    response: np.ndarray


def _detect_one_level(level: int, image: GrayImage, scale: float, params: DetectorParams) -> _LevelKeypoints:
    start = time.perf_counter()
    found = detect_level(image, params)
    ys, xs = nms(found.responses)
    rx, ry = _refine_many(found.responses, ys, xs)
    logger.debug(
        "Level processed",
        extra={
            "level": level,
            "width": image.width,
            "height": image.height,
            "interior": found.interior,
            "inner_passed": found.inner_passed,
            "outer_passed": int(found.ys.size),
            "nms_survivors": int(ys.size),
            "duration_ms": round((time.perf_counter() - start) * 1000, 3),
        },
    )
    return _LevelKeypoints(
        level=level,
        x=(rx + 0.5) * scale - 0.5,
        y=(ry + 0.5) * scale - 0.5,
        grid_x=xs,
        grid_y=ys,
        response=found.responses[ys, xs],
    )


def detect_pyramid(pyramid: Pyramid, params: DetectorParams, *, threads: int = 1) -> list[Keypoint]:
    """Detect on a prebuilt pyramid; see :func:`detect`."""
    start = time.perf_counter()
    jobs = range(len(pyramid))
    if threads <= 1 or len(pyramid) == 1:
        per_level = [
            _detect_one_level(n, pyramid.levels[n], pyramid.level_scales[n], params) for n in jobs
        ]
    else:
        with ThreadPoolExecutor(max_workers=min(threads, len(pyramid))) as executor:
            futures = {
                executor.submit(
                    _detect_one_level, n, pyramid.levels[n], pyramid.level_scales[n], params
                ): n
                for n in jobs
            }
            per_level = [fut.result() for fut in as_completed(futures)]
        per_level.sort(key=lambda r: r.level)

    xs = np.concatenate([r.x for r in per_level])
    ys = np.concatenate([r.y for r in per_level])
    grid_x = np.concatenate([r.grid_x for r in per_level])
    grid_y = np.concatenate([r.grid_y for r in per_level])
    strengths = np.concatenate([r.response for r in per_level])
    levels = np.concatenate([np.full(r.x.shape, r.level, dtype=np.int64) for r in per_level])

    # Descending response; ties by level, then raster position on that level.
    order = np.lexsort((grid_x, grid_y, levels, -strengths))
    if params.max_features is not None:
        order = order[: params.max_features]

    keypoints = [
        Keypoint(
            x=float(xs[i]),
            y=float(ys[i]),
            level=int(levels[i]),
            scale=float(pyramid.level_scales[levels[i]]),
            response=float(strengths[i]),
        )
        for i in order
    ]

    duration_ms = round((time.perf_counter() - start) * 1000, 3)
    log_extra = {
        "levels": len(pyramid),
        "keypoints": len(keypoints),
        "threads": threads,
        "duration_ms": duration_ms,
    }
    if duration_ms >= _DETECT_DURATION_LOG_THRESHOLD_MS:
        logger.info("Detection completed", extra=log_extra)
    else:
        logger.debug("Detection completed", extra=log_extra)
    return keypoints


def detect(image: GrayImage, params: DetectorParams | None = None, *, threads: int = 1) -> list[Keypoint]:
    """Detect Saddle keypoints on ``image``.

    Args:
        image:   Base image, at least 16x16.
        params:  Detector settings; defaults when omitted.
        threads: Worker threads across pyramid levels. The result is identical
                 for every value.

    Returns:
        Keypoints in base-image coordinates, sorted by descending response
        (ties: lower level first, then raster order), truncated to
        ``params.max_features`` when set.

    Raises:
        ParameterError: The image is smaller than 16x16.
    """
    from src.cli import ParameterError

    params = params or DetectorParams()
    if min(image.width, image.height) < MIN_LEVEL_SIZE:
        raise ParameterError(
            f"Image {image.width}x{image.height} is smaller than {MIN_LEVEL_SIZE}x{MIN_LEVEL_SIZE}."
        )
    pyramid = build_pyramid(image, params.n_levels, params.scale_factor)
    return detect_pyramid(pyramid, params, threads=threads)


def annotate(image: GrayImage, keypoints: list[Keypoint]) -> GrayImage:
    """Copy of ``image`` with a 255-valued plus mark (3x3 extent) at every keypoint."""
    canvas = image.data.copy()
    h, w = canvas.shape
    for kp in keypoints:
        cx, cy = round_half_up(kp.x), round_half_up(kp.y)
        for dx, dy in ((0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)):
            x, y = cx + dx, cy + dy
            if 0 <= x < w and 0 <= y < h:
                canvas[y, x] = 255
    return GrayImage(canvas)
