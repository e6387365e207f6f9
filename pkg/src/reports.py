"""CSV and JSON serialisation of keypoints, ground truth and evaluation reports.

Output is a pure function of its input: fixed column order, fixed decimal
places and ``\\n`` line endings, so identical runs produce identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
import math
import sys

from aws_lambda_powertools import Logger

from src.detector import Keypoint
from src.evaluation import SequenceReport
from src.synth import GroundTruthPoint

logger = Logger(service="saddle", stream=sys.stderr)

FORMATS = ("csv", "json")

KEYPOINT_FIELDS = ("x", "y", "scale", "level", "response")
GROUND_TRUTH_FIELDS = ("u", "v", "x", "y")
SUMMARY_FIELDS = ("pair", "tentatives", "inliers", "inlier_ratio", "coverage", "matched")
CURVE_FIELDS = ("threshold", "ratio")
BENCH_FIELDS = ("stage", "mean_ms", "std_ms")


def _fixed(value: float, places: int = 3) -> str:
    text = f"{value:.{places}f}"
    # Avoid "-0.000" for values that round to zero.
    return text[1:] if text.startswith("-") and float(text) == 0.0 else text


def _csv(header, rows) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def _json(payload) -> str:
    return json.dumps(payload, indent=2, ensure_ascii=False) + "\n"


def _check_format(fmt: str) -> None:
    from src.cli import ParameterError

    if fmt not in FORMATS:
        raise ParameterError(f"Unknown report format {fmt!r}; expected one of {', '.join(FORMATS)}")


# ---------------------------------------------------------------------------
# Keypoints
# ---------------------------------------------------------------------------


def _keypoint_row(kp: Keypoint) -> dict:
    return {
        "x": _fixed(kp.x),
        "y": _fixed(kp.y),
        "scale": _fixed(kp.scale, 6),
        "level": kp.level,
        "response": _fixed(kp.response),
    }


def format_keypoints(keypoints: list[Keypoint], fmt: str = "csv") -> str:
    """Serialise keypoints in the given order (detect sorts by response)."""
    _check_format(fmt)
    rows = [_keypoint_row(kp) for kp in keypoints]
    if fmt == "csv":
        return _csv(KEYPOINT_FIELDS, ([row[f] for f in KEYPOINT_FIELDS] for row in rows))
    return _json(
        [
            {f: (row[f] if f == "level" else float(row[f])) for f in KEYPOINT_FIELDS}
            for row in rows
        ]
    )


def _keypoint_from(record: dict, location: str, line: int) -> Keypoint:
    from src.cli import FormatError

    try:
        kp = Keypoint(
            x=float(record["x"]),
            y=float(record["y"]),
            scale=float(record["scale"]),
            level=int(record["level"]),
            response=float(record["response"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{location}: invalid keypoint record {line}: {exc}") from exc
    if not all(math.isfinite(v) for v in (kp.x, kp.y, kp.scale, kp.response)) or kp.level < 0:
        raise FormatError(f"{location}: invalid keypoint record {line}")
    return kp


def read_keypoints(text: str, location: str = "<text>") -> list[Keypoint]:
    """Parse a keypoint file written by :func:`format_keypoints` (CSV or JSON).

    Raises:
        FormatError: Missing columns or unparsable values.
    """
    from src.cli import FormatError

    if text.lstrip().startswith("["):
        try:
            records = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{location}: keypoint JSON is malformed: {exc.msg}") from exc
        if not isinstance(records, list):
            raise FormatError(f"{location}: keypoint JSON must be an array")
        return [_keypoint_from(r, location, n) for n, r in enumerate(records, start=1)]

    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or tuple(reader.fieldnames) != KEYPOINT_FIELDS:
        raise FormatError(
            f"{location}: keypoint CSV header must be {','.join(KEYPOINT_FIELDS)}; "
            f"got {','.join(reader.fieldnames or [])}"
        )
    return [_keypoint_from(r, location, n) for n, r in enumerate(reader, start=2)]


# ---------------------------------------------------------------------------
# Ground truth
# ---------------------------------------------------------------------------


def format_ground_truth(points: list[GroundTruthPoint], fmt: str = "csv") -> str:
    _check_format(fmt)
    rows = [[_fixed(p.u), _fixed(p.v), _fixed(p.x), _fixed(p.y)] for p in points]
    if fmt == "csv":
        return _csv(GROUND_TRUTH_FIELDS, rows)
    return _json([dict(zip(GROUND_TRUTH_FIELDS, map(float, row))) for row in rows])


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def format_summary(report: SequenceReport, fmt: str = "csv") -> str:
    """Per-pair summary; the JSON form also carries the curves and the
    sequence totals."""
    _check_format(fmt)
    if fmt == "csv":
        return _csv(
            SUMMARY_FIELDS,
            (
                [
                    p.name,
                    p.tentatives,
                    p.inliers,
                    _fixed(p.inlier_ratio, 6),
                    _fixed(p.coverage, 6),
                    "true" if p.matched else "false",
                ]
                for p in report.pairs
            ),
        )
    return _json(
        {
            "pairs": [
                {
                    "pair": p.name,
                    "tentatives": p.tentatives,
                    "inliers": p.inliers,
                    "inlier_ratio": round(p.inlier_ratio, 6),
                    "coverage": round(p.coverage, 6),
                    "matched": p.matched,
                    "curve": [
                        {"threshold": t, "ratio": round(r, 6)} for t, r in p.curve
                    ],
                }
                for p in report.pairs
            ],
            "matched_pairs": report.matched_pairs,
            "mean_inliers": round(report.mean_inliers, 6),
        }
    )


def format_curve(report: SequenceReport, fmt: str = "csv") -> str:
    """Inlier-ratio curves; a leading ``pair`` column appears when there are
    several pairs."""
    _check_format(fmt)
    several = len(report.pairs) > 1
    records = [
        ({"pair": p.name} if several else {}) | {"threshold": t, "ratio": r}
        for p in report.pairs
        for t, r in p.curve
    ]
    if fmt == "json":
        return _json([r | {"ratio": round(r["ratio"], 6)} for r in records])
    header = (("pair",) if several else ()) + CURVE_FIELDS
    return _csv(
        header,
        (
            ([r["pair"]] if several else []) + [_fixed(r["threshold"], 2), _fixed(r["ratio"], 6)]
            for r in records
        ),
    )


def format_bench(stages: list[tuple[str, float, float]], fmt: str = "csv") -> str:
    """``(stage, mean_ms, std_ms)`` rows."""
    _check_format(fmt)
    if fmt == "csv":
        return _csv(BENCH_FIELDS, ([s, _fixed(m), _fixed(d)] for s, m, d in stages))
    return _json(
        [{"stage": s, "mean_ms": round(m, 3), "std_ms": round(d, 3)} for s, m, d in stages]
    )
