"""Ground-truth verification and matching-quality measures.

All reprojection errors are measured in the reference image (set A): a
keypoint of set B is mapped back through the inverse homography and compared
with its partner in A.

Measures:
    - inlier ratio at a tolerance and as a curve over thresholds,
    - coverage: fraction of the reference image within a fixed radius of any
      verified inlier,
    - matched pair: at least :data:`MATCHED_PAIR_MIN_INLIERS` inliers.
"""

from __future__ import annotations

import math
import sys
import time
from dataclasses import dataclass, field, replace

import numpy as np
from aws_lambda_powertools import Logger

from src.descriptor import MatchSet, describe, match
from src.detector import DetectorParams, Keypoint, detect_pyramid
from src.geometry import Homography, project_many
from src.imageio import GrayImage, build_pyramid

logger = Logger(service="saddle", stream=sys.stderr)

DEFAULT_TOLERANCE = 3.0
DEFAULT_DISK_RADIUS = 25.0
MATCHED_PAIR_MIN_INLIERS = 15
CURVE_THRESHOLDS: tuple[float, ...] = tuple(0.25 * k for k in range(1, 21))

# ---------------------------------------------------------------------------
# Data classes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Verification:
    """Result of :func:`verify`.

    Attributes:
        matches: Every tentative match with its reprojection error set.
        inliers: The matches whose error is within the tolerance.
    """

    matches: MatchSet
    inliers: MatchSet


@dataclass(frozen=True, eq=False)
class PairReport:
    """Measures for one reference/target pair."""

    name: str
    tentatives: int
    inliers: int
    inlier_ratio: float
    coverage: float
    matched: bool
    curve: tuple[tuple[float, float], ...]
    mask: np.ndarray = field(repr=False)


@dataclass(frozen=True, eq=False)
class SequenceReport:
    """Reference image evaluated against several targets.

    Attributes:
        pairs:        One report per target, in input order.
        matched_pairs: Pairs with at least 15 inliers.
        mean_inliers: Mean inlier count over matched pairs (0.0 when none).
    """

    pairs: tuple[PairReport, ...]
    matched_pairs: int
    mean_inliers: float


# ---------------------------------------------------------------------------
# Measures
# ---------------------------------------------------------------------------


def verify(
    matches: MatchSet,
    homography: Homography,
    keypoints_a: list[Keypoint],
    keypoints_b: list[Keypoint],
    tolerance: float = DEFAULT_TOLERANCE,
) -> Verification:
    """Check tentative matches against the ground-truth homography (A -> B).

    Raises:
        ParameterError: ``tolerance < 0``.
        GeometryError:  A keypoint of B maps to infinity under ``H^-1``.
    """
    from src.cli import ParameterError

    if not tolerance >= 0.0:
        raise ParameterError(f"Verification tolerance must be >= 0; got {tolerance}")
    if len(matches) == 0:
        return Verification(matches=MatchSet(), inliers=MatchSet())

    ax = np.array([keypoints_a[m.index_a].x for m in matches], dtype=np.float64)
    ay = np.array([keypoints_a[m.index_a].y for m in matches], dtype=np.float64)
    bx = np.array([keypoints_b[m.index_b].x for m in matches], dtype=np.float64)
    by = np.array([keypoints_b[m.index_b].y for m in matches], dtype=np.float64)
    rx, ry = project_many(homography.inverse(), bx, by)
    errors = np.hypot(rx - ax, ry - ay)

    checked = tuple(replace(m, error=float(e)) for m, e in zip(matches, errors))
    inliers = tuple(m for m in checked if m.error <= tolerance)
    return Verification(matches=MatchSet(checked), inliers=MatchSet(inliers))


def coverage(
    inliers: MatchSet,
    keypoints_a: list[Keypoint],
    width: int,
    height: int,
    disk_radius: float = DEFAULT_DISK_RADIUS,
) -> tuple[float, np.ndarray]:
    """Union of disks around the reference keypoints of the inliers.

    A pixel belongs to a disk when its centre (integer pixel coordinates) is
    within ``disk_radius`` of the keypoint.

    Returns:
        ``(ratio, mask)`` with ``mask`` a boolean ``(height, width)`` array.

    Raises:
        ParameterError: ``disk_radius <= 0`` or a non-positive image size.
    """
    from src.cli import ParameterError

    if not disk_radius > 0.0:
        raise ParameterError(f"Coverage disk radius must be > 0; got {disk_radius}")
    if width < 1 or height < 1:
        raise ParameterError(f"Coverage needs a positive image size; got {width}x{height}")

    mask = np.zeros((height, width), dtype=bool)
    r2 = disk_radius * disk_radius
    for m in inliers:
        kp = keypoints_a[m.index_a]
        x0 = max(0, math.floor(kp.x - disk_radius))
        x1 = min(width - 1, math.ceil(kp.x + disk_radius))
        y0 = max(0, math.floor(kp.y - disk_radius))
        y1 = min(height - 1, math.ceil(kp.y + disk_radius))
        if x0 > x1 or y0 > y1:
            continue
        dx = np.arange(x0, x1 + 1, dtype=np.float64) - kp.x
        dy = np.arange(y0, y1 + 1, dtype=np.float64) - kp.y
        mask[y0 : y1 + 1, x0 : x1 + 1] |= (dy[:, np.newaxis] ** 2 + dx[np.newaxis, :] ** 2) <= r2
    return float(np.count_nonzero(mask)) / (width * height), mask


def inlier_ratio_curve(matches: MatchSet, thresholds=CURVE_THRESHOLDS) -> list[float]:
    """Fraction of tentative matches with error within each threshold.

    Raises:
        UndefinedRatioError: ``matches`` is empty.
        ParameterError:      A match has not been verified.
    """
    from src.cli import ParameterError, UndefinedRatioError

    if len(matches) == 0:
        raise UndefinedRatioError("Inlier ratio is undefined without tentative matches.")
    errors = matches.errors()
    if np.any(np.isnan(errors)):
        raise ParameterError("Inlier ratio curve needs verified matches (errors missing).")
    errors = np.sort(errors)
    counts = np.searchsorted(errors, np.asarray(thresholds, dtype=np.float64), side="right")
    return [float(c) / errors.size for c in counts]


def matched_pair(inlier_count: int, minimum: int = MATCHED_PAIR_MIN_INLIERS) -> bool:
    return inlier_count >= minimum


# ---------------------------------------------------------------------------
# Pair and sequence drivers
# ---------------------------------------------------------------------------


def _keypoints_for(image: GrayImage, params: DetectorParams, threads: int, given):
    pyramid = build_pyramid(image, params.n_levels, params.scale_factor)
    if given is None:
        return pyramid, detect_pyramid(pyramid, params, threads=threads)
    return pyramid, list(given)


def _pair_report(
    name: str,
    reference: tuple,
    target: tuple,
    homography: Homography,
    tolerance: float,
    disk_radius: float,
    image_size: tuple[int, int],
) -> PairReport:
    keypoints_a, descriptors_a = reference
    keypoints_b, descriptors_b = target
    tentative = match(descriptors_a, descriptors_b)
    checked = verify(tentative, homography, keypoints_a, keypoints_b, tolerance)
    ratio, mask = coverage(checked.inliers, keypoints_a, image_size[0], image_size[1], disk_radius)

    if len(tentative) == 0:
        curve = tuple((t, 0.0) for t in CURVE_THRESHOLDS)
        inlier_ratio = 0.0
    else:
        curve = tuple(zip(CURVE_THRESHOLDS, inlier_ratio_curve(checked.matches)))
        inlier_ratio = len(checked.inliers) / len(tentative)

    report = PairReport(
        name=name,
        tentatives=len(tentative),
        inliers=len(checked.inliers),
        inlier_ratio=inlier_ratio,
        coverage=ratio,
        matched=matched_pair(len(checked.inliers)),
        curve=curve,
        mask=mask,
    )
    logger.info(
        "Pair evaluated",
        extra={
            "pair": name,
            "keypoints_a": len(keypoints_a),
            "keypoints_b": len(keypoints_b),
            "tentatives": report.tentatives,
            "inliers": report.inliers,
            "coverage": round(report.coverage, 6),
            "matched": report.matched,
        },
    )
    return report


def evaluate_sequence(
    reference: GrayImage,
    targets: list[tuple[str, GrayImage, Homography]],
    params: DetectorParams | None = None,
    *,
    tolerance: float = DEFAULT_TOLERANCE,
    disk_radius: float = DEFAULT_DISK_RADIUS,
    threads: int = 1,
    reference_keypoints: list[Keypoint] | None = None,
    target_keypoints: list[list[Keypoint] | None] | None = None,
) -> SequenceReport:
    """Evaluate ``reference`` against each ``(name, image, H)`` target.

    The reference is detected and described once. Precomputed keypoints, when
    given, replace detection; their levels must exist in the pyramid built
    from ``params``.

    Raises:
        ParameterError: No targets, or mismatched precomputed keypoint lists.
    """
    from src.cli import ParameterError

    params = params or DetectorParams()
    if not targets:
        raise ParameterError("Evaluation needs at least one target image.")
    if target_keypoints is not None and len(target_keypoints) != len(targets):
        raise ParameterError(
            f"Got {len(target_keypoints)} precomputed keypoint lists for {len(targets)} targets."
        )

    start = time.perf_counter()
    pyramid_a, keypoints_a = _keypoints_for(reference, params, threads, reference_keypoints)
    reference_side = (keypoints_a, describe(pyramid_a, keypoints_a))

    reports = []
    for n, (name, image, homography) in enumerate(targets):
        given = None if target_keypoints is None else target_keypoints[n]
        pyramid_b, keypoints_b = _keypoints_for(image, params, threads, given)
        reports.append(
            _pair_report(
                name,
                reference_side,
                (keypoints_b, describe(pyramid_b, keypoints_b)),
                homography,
                tolerance,
                disk_radius,
                (reference.width, reference.height),
            )
        )

    matched = [r for r in reports if r.matched]
    mean_inliers = float(np.mean([r.inliers for r in matched])) if matched else 0.0
    logger.info(
        "Sequence evaluated",
        extra={
            "pairs": len(reports),
            "matched_pairs": len(matched),
            "mean_inliers": round(mean_inliers, 3),
            "duration_ms": round((time.perf_counter() - start) * 1000, 3),
        },
    )
    return SequenceReport(pairs=tuple(reports), matched_pairs=len(matched), mean_inliers=mean_inliers)


def evaluate_pair(
    image_a: GrayImage,
    image_b: GrayImage,
    homography: Homography,
    params: DetectorParams | None = None,
    *,
    name: str = "1",
    tolerance: float = DEFAULT_TOLERANCE,
    disk_radius: float = DEFAULT_DISK_RADIUS,
    threads: int = 1,
    keypoints_a: list[Keypoint] | None = None,
    keypoints_b: list[Keypoint] | None = None,
) -> PairReport:
    """Detect, describe, match and verify one pair; ``homography`` maps A to B."""
    report = evaluate_sequence(
        image_a,
        [(name, image_b, homography)],
        params,
        tolerance=tolerance,
        disk_radius=disk_radius,
        threads=threads,
        reference_keypoints=keypoints_a,
        target_keypoints=None if keypoints_b is None else [keypoints_b],
    )
    return report.pairs[0]
