"""Fixed-pattern 256-bit binary descriptor and mutual nearest-neighbour matching.

Each descriptor bit compares two 5x5 box-smoothed intensities around the
keypoint on its own pyramid level: bit ``k`` is 1 iff the box sum at
``p + u_k`` is strictly below the box sum at ``p + v_k``. The 256 offset pairs
are drawn once, at import time, from a fixed-seed generator, so the pattern is
identical in every process.
"""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass

import numpy as np
from aws_lambda_powertools import Logger

from src.detector import Keypoint
from src.imageio import Pyramid, round_half_up

logger = Logger(service="saddle", stream=sys.stderr)

N_BITS = 256
N_BYTES = N_BITS // 8
PATCH_RADIUS = 15
SMOOTH_RADIUS = 2
# Keypoints nearer than this to a level border are not described.
BORDER_MARGIN = PATCH_RADIUS + SMOOTH_RADIUS

PATTERN_SEED = 20160603
_PATTERN_SIGMA = 31.0 / 5.0

# Rows of the A x B distance block computed at once in match().
_MATCH_CHUNK_CELLS = 1 << 22

_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint16)


def _draw_pattern(seed: int) -> np.ndarray:
    """Draw ``N_BITS`` offset pairs ``(ux, uy, vx, vy)`` from an isotropic
    Gaussian, resampling pairs that leave the patch or coincide."""
    rng = np.random.default_rng(seed)
    pairs: list[np.ndarray] = []
    while len(pairs) < N_BITS:
        pair = np.floor(rng.normal(0.0, _PATTERN_SIGMA, size=4) + 0.5).astype(np.int64)
        if np.max(np.abs(pair)) > PATCH_RADIUS:
            continue
        if pair[0] == pair[2] and pair[1] == pair[3]:
            continue
        pairs.append(pair)
    table = np.stack(pairs)
    table.flags.writeable = False
    return table


PATTERN = _draw_pattern(PATTERN_SEED)


@dataclass(frozen=True, eq=False)
class Descriptors:
    """Descriptors for the describable subset of a keypoint list.

    Attributes:
        keypoint_indices: Index into the input keypoint list for each row.
        bits:             ``uint8`` array ``[n, 32]``; bit ``k`` is bit
                          ``7 - k % 8`` of byte ``k // 8``.
        undescribed:      Indices of keypoints dropped for lying too close to
                          their level border.
    """

    keypoint_indices: np.ndarray
    bits: np.ndarray
    undescribed: tuple[int, ...] = ()

    def __len__(self) -> int:
        return int(self.bits.shape[0])


@dataclass(frozen=True)
class Match:
    """One correspondence between keypoint ``index_a`` of set A and
    ``index_b`` of set B. ``error`` is filled in by verification."""

    index_a: int
    index_b: int
    distance: int
    error: float | None = None


@dataclass(frozen=True)
class MatchSet:
    """Correspondences; each index occurs at most once per side."""

    matches: tuple[Match, ...] = ()

    def __len__(self) -> int:
        return len(self.matches)

    def __iter__(self):
        return iter(self.matches)

    def errors(self) -> np.ndarray:
        """Reprojection errors as float64; unverified matches are NaN."""
        return np.array(
            [np.nan if m.error is None else m.error for m in self.matches], dtype=np.float64
        )


# ---------------------------------------------------------------------------
# Describe
# ---------------------------------------------------------------------------


def _integral(level: np.ndarray) -> np.ndarray:
    table = np.zeros((level.shape[0] + 1, level.shape[1] + 1), dtype=np.int64)
    table[1:, 1:] = level.astype(np.int64).cumsum(axis=0).cumsum(axis=1)
    return table


def _box_sums(table: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    r = SMOOTH_RADIUS
    return (
        table[ys + r + 1, xs + r + 1]
        - table[ys - r, xs + r + 1]
        - table[ys + r + 1, xs - r]
        + table[ys - r, xs - r]
    )


def describe(pyramid: Pyramid, keypoints: list[Keypoint]) -> Descriptors:
    """Compute a descriptor for every keypoint at least 17 px inside its level.

    The sampling centre is the keypoint's level position, rounded half-up.
    """
    start = time.perf_counter()
    tables: dict[int, np.ndarray] = {}
    kept: list[int] = []
    dropped: list[int] = []
    centres_x: list[int] = []
    centres_y: list[int] = []
    levels: list[int] = []

    for index, kp in enumerate(keypoints):
        if not 0 <= kp.level < len(pyramid):
            dropped.append(index)
            continue
        image = pyramid.levels[kp.level]
        lx, ly = kp.level_position()
        cx, cy = round_half_up(lx), round_half_up(ly)
        if not (
            BORDER_MARGIN <= cx < image.width - BORDER_MARGIN
            and BORDER_MARGIN <= cy < image.height - BORDER_MARGIN
        ):
            dropped.append(index)
            continue
        kept.append(index)
        centres_x.append(cx)
        centres_y.append(cy)
        levels.append(kp.level)

    bits = np.zeros((len(kept), N_BITS), dtype=np.uint8)
    cx_arr = np.asarray(centres_x, dtype=np.int64)
    cy_arr = np.asarray(centres_y, dtype=np.int64)
    level_arr = np.asarray(levels, dtype=np.int64)
    for level in np.unique(level_arr):
        rows = np.flatnonzero(level_arr == level)
        if level not in tables:
            tables[level] = _integral(pyramid.levels[level].data)
        table = tables[level]
        px = cx_arr[rows, np.newaxis]
        py = cy_arr[rows, np.newaxis]
        first = _box_sums(table, px + PATTERN[:, 0], py + PATTERN[:, 1])
        second = _box_sums(table, px + PATTERN[:, 2], py + PATTERN[:, 3])
        bits[rows] = first < second

    packed = np.packbits(bits, axis=1) if kept else np.zeros((0, N_BYTES), dtype=np.uint8)
    logger.debug(
        "Descriptors computed",
        extra={
            "described": len(kept),
            "undescribed": len(dropped),
            "duration_ms": round((time.perf_counter() - start) * 1000, 3),
        },
    )
    return Descriptors(
        keypoint_indices=np.asarray(kept, dtype=np.int64),
        bits=packed,
        undescribed=tuple(dropped),
    )


# ---------------------------------------------------------------------------
# Match
# ---------------------------------------------------------------------------


def hamming(a: np.ndarray, b: np.ndarray) -> int:
    """Hamming distance between two packed 32-byte descriptors."""
    return int(_POPCOUNT[np.bitwise_xor(np.asarray(a, dtype=np.uint8), np.asarray(b, dtype=np.uint8))].sum())


def distance_matrix(bits_a: np.ndarray, bits_b: np.ndarray) -> np.ndarray:
    """All pairwise Hamming distances, ``int64`` array ``[n_a, n_b]``."""
    n_a, n_b = bits_a.shape[0], bits_b.shape[0]
    out = np.zeros((n_a, n_b), dtype=np.int64)
    if n_a == 0 or n_b == 0:
        return out
    chunk = max(1, _MATCH_CHUNK_CELLS // (n_b * N_BYTES))
    for lo in range(0, n_a, chunk):
        xor = np.bitwise_xor(bits_a[lo : lo + chunk, np.newaxis, :], bits_b[np.newaxis, :, :])
        out[lo : lo + chunk] = _POPCOUNT[xor].sum(axis=2)
    return out


def match(desc_a: Descriptors, desc_b: Descriptors) -> MatchSet:
    """Mutual nearest neighbours by Hamming distance.

    Ties go to the lower row index in B, then in A. Returned indices are
    keypoint indices, ordered by the A side.
    """
    start = time.perf_counter()
    if len(desc_a) == 0 or len(desc_b) == 0:
        return MatchSet()

    distances = distance_matrix(desc_a.bits, desc_b.bits)
    best_b = np.argmin(distances, axis=1)
    best_a = np.argmin(distances, axis=0)
    rows_a = np.flatnonzero(best_a[best_b] == np.arange(len(desc_a)))

    matches = tuple(
        Match(
            index_a=int(desc_a.keypoint_indices[row]),
            index_b=int(desc_b.keypoint_indices[best_b[row]]),
            distance=int(distances[row, best_b[row]]),
        )
        for row in rows_a
    )
    logger.debug(
        "Descriptors matched",
        extra={
            "set_a": len(desc_a),
            "set_b": len(desc_b),
            "matches": len(matches),
            "duration_ms": round((time.perf_counter() - start) * 1000, 3),
        },
    )
    return MatchSet(matches)
