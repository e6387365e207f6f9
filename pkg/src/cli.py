"""Command-line entry point for Saddle keypoint detection and evaluation.

Subcommands::

    detect   IMAGE              keypoints as CSV/JSON, optional PGM overlay
    synth    chessboard|sinusoid  synthetic patterns plus ground truth
    eval     REF TARGET...      detect, describe, match, verify against H
    bench    IMAGE...           per-stage wall-clock timings

Run as ``python -m src.cli <subcommand> ...``. Reports go to ``-o`` (a local
path or ``s3://`` URI) or to standard output; logs and error messages go to
standard error.

Exit codes: 0 success, 1 unexpected failure, 2 I/O or file-format error,
3 parameter error.

Exception hierarchy defined here is the single source of truth used across all
modules to ensure consistent error propagation.

Modules:
    imageio:    GrayImage, PGM codec, scale pyramid.
    automaton:  Outer-ring acceptor.
    detector:   Ring tests, NMS, refinement, multi-level detection.
    synth:      Chessboard and sinusoid generators with ground truth.
    geometry:   Homography loading and projection.
    descriptor: Binary descriptor and mutual nearest-neighbour matching.
    evaluation: Verification, coverage, inlier-ratio curves, matched pairs.
    reports:    CSV/JSON serialisation.
    config:     Environment-variable-based Config.
    sources:    Local and S3 byte sources.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import PurePosixPath

import numpy as np
from aws_lambda_powertools import Logger

from src.config import get_config
from src.descriptor import describe, match
from src.detector import DetectorParams, annotate, detect_pyramid
from src.evaluation import DEFAULT_DISK_RADIUS, DEFAULT_TOLERANCE, evaluate_sequence
from src.geometry import Homography, load_homography
from src.imageio import MIN_LEVEL_SIZE, GrayImage, build_pyramid, load_pgm, save_pgm
from src.reports import (
    FORMATS,
    format_bench,
    format_curve,
    format_ground_truth,
    format_keypoints,
    format_summary,
    read_keypoints,
)
from src.sources import join_location, read_bytes, write_bytes
from src.synth import DEFAULT_PERSPECTIVE, SinusoidSpec, blur_sequence, chessboard_corners, sinusoid

logger = Logger(service="saddle", stream=sys.stderr)

# Threshold in seconds above which command duration is logged at INFO.
_DURATION_LOG_THRESHOLD_SEC = 0.1

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_IO = 2
EXIT_PARAMETER = 3

DEFAULT_REPEAT = 10
MIN_REPEAT = 10
BENCH_STAGES = ("load", "pyramid", "detect", "describe", "match")


# ---------------------------------------------------------------------------
# Exception hierarchy
# ---------------------------------------------------------------------------


class SaddleError(Exception):
    """Base exception for all saddle errors."""


class ParameterError(SaddleError):
    """Raised when a parameter, flag or precondition is invalid."""


class UndefinedRatioError(ParameterError):
    """Raised when an inlier ratio is requested without tentative matches."""


class GeometryError(SaddleError):
    """Raised when a point maps to infinity under a homography."""


class FormatError(SaddleError):
    """Raised when a PGM, homography or keypoint file is malformed."""


class SourceError(SaddleError):
    """Raised when a file or S3 object cannot be read or written."""


def exit_code_for(exc: SaddleError) -> int:
    """Map an error to the process exit code."""
    if isinstance(exc, (FormatError, SourceError)):
        return EXIT_IO
    return EXIT_PARAMETER


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


class _ArgumentParser(argparse.ArgumentParser):
    """Usage errors become :class:`ParameterError` instead of ``SystemExit(2)``."""

    def error(self, message: str):
        raise ParameterError(f"{self.prog}: {message}")


def _add_detector_flags(parser: argparse.ArgumentParser) -> None:
    defaults = DetectorParams()
    group = parser.add_argument_group("detector")
    group.add_argument("--epsilon", type=float, default=defaults.epsilon,
                       help="similarity band half-width around rho (default: %(default)s)")
    group.add_argument("--levels", type=int, default=defaults.n_levels,
                       help="pyramid levels (default: %(default)s)")
    group.add_argument("--scale-factor", type=float, default=defaults.scale_factor,
                       help="ratio between pyramid levels (default: %(default)s)")
    group.add_argument("--max-features", type=int, default=None,
                       help="keep only the strongest N keypoints")
    group.add_argument("--threads", type=int, default=None,
                       help="worker threads across levels (default: SADDLE_THREADS or 1)")


def _add_output_flags(parser: argparse.ArgumentParser, output_help: str) -> None:
    parser.add_argument("-o", "--output", default=None, help=output_help)
    parser.add_argument("--format", choices=FORMATS, default="csv",
                        help="report format (default: %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="saddle", description="Saddle keypoint detector")
    commands = parser.add_subparsers(dest="command", required=True)

    detect_cmd = commands.add_parser("detect", help="detect keypoints in a PGM image")
    detect_cmd.add_argument("image", help="input PGM (path or s3:// URI)")
    _add_detector_flags(detect_cmd)
    _add_output_flags(detect_cmd, "keypoint file (default: standard output)")
    detect_cmd.add_argument("--overlay", default=None,
                            help="write a PGM copy with keypoints marked in white")
    detect_cmd.set_defaults(handler=cmd_detect)

    synth_cmd = commands.add_parser("synth", help="generate synthetic test patterns")
    patterns = synth_cmd.add_subparsers(dest="pattern", required=True)

    board = patterns.add_parser("chessboard", help="blurred chessboard sequence")
    board.add_argument("--width", type=int, default=256)
    board.add_argument("--height", type=int, default=256)
    board.add_argument("--square", type=int, default=16)
    board.add_argument("--sigmas", default="0,1,2,4",
                       help="comma-separated blur sigmas (default: %(default)s)")
    _add_output_flags(board, "output directory")
    board.set_defaults(handler=cmd_synth)

    wave = patterns.add_parser("sinusoid", help="perspective sin*sin pattern")
    wave.add_argument("--width", type=int, default=256)
    wave.add_argument("--height", type=int, default=256)
    wave.add_argument("--wavelength", type=float, default=32.0)
    wave.add_argument("--contrast", type=float, default=1.0)
    plane = wave.add_mutually_exclusive_group()
    plane.add_argument("--homography", default=None,
                       help="plane-to-image homography file (default: mild perspective)")
    plane.add_argument("--identity", action="store_true", help="use the identity homography")
    _add_output_flags(wave, "output directory")
    wave.set_defaults(handler=cmd_synth)

    eval_cmd = commands.add_parser("eval", help="evaluate matching against ground truth")
    eval_cmd.add_argument("reference", help="reference PGM")
    eval_cmd.add_argument("targets", nargs="+", help="target PGM(s)")
    eval_cmd.add_argument("--homography", nargs="+", required=True,
                          help="reference-to-target homography file per target")
    eval_cmd.add_argument("--keypoints", nargs="+", default=None,
                          help="precomputed keypoint files: reference first, then one per target")
    eval_cmd.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE,
                          help="inlier tolerance in px (default: %(default)s)")
    eval_cmd.add_argument("--disk-radius", type=float, default=DEFAULT_DISK_RADIUS,
                          help="coverage disk radius in px (default: %(default)s)")
    eval_cmd.add_argument("--curve-out", default=None, help="write the inlier-ratio curve here")
    eval_cmd.add_argument("--mask-out", default=None, help="write the coverage mask as PGM")
    _add_detector_flags(eval_cmd)
    _add_output_flags(eval_cmd, "summary report (default: standard output)")
    eval_cmd.set_defaults(handler=cmd_eval)

    bench_cmd = commands.add_parser("bench", help="time the pipeline stages")
    bench_cmd.add_argument("images", nargs="*", help="input PGM image(s)")
    bench_cmd.add_argument(
        "--repeat", type=int, default=DEFAULT_REPEAT,
        help=f"timed repetitions per image, at least {MIN_REPEAT} (default: %(default)s)",
    )
    _add_detector_flags(bench_cmd)
    _add_output_flags(bench_cmd, "timing report (default: standard output)")
    bench_cmd.set_defaults(handler=cmd_bench)

    return parser


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------


def _detector_params(args: argparse.Namespace) -> DetectorParams:
    return DetectorParams(
        epsilon=args.epsilon,
        n_levels=args.levels,
        scale_factor=args.scale_factor,
        max_features=args.max_features,
    )


def _threads(args: argparse.Namespace) -> int:
    threads = args.threads if args.threads is not None else get_config().threads
    if threads < 1:
        raise ParameterError(f"--threads must be >= 1; got {threads}")
    return threads


def _emit(text: str, location: str | None) -> None:
    if location is None:
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        write_bytes(location, text.encode("utf-8"))


def _check_size(image: GrayImage, location: str) -> None:
    if min(image.width, image.height) < MIN_LEVEL_SIZE:
        raise ParameterError(
            f"{location}: image {image.width}x{image.height} is smaller than "
            f"{MIN_LEVEL_SIZE}x{MIN_LEVEL_SIZE}."
        )


def _stem(location: str) -> str:
    return PurePosixPath(location).stem


def _parse_sigmas(text: str) -> list[float]:
    try:
        sigmas = [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ParameterError(f"--sigmas must be comma-separated numbers; got {text!r}") from exc
    if not sigmas:
        raise ParameterError("--sigmas needs at least one value")
    for sigma in sigmas:
        if not sigma >= 0.0:
            raise ParameterError(f"Blur sigma must be >= 0; got {sigma:g}")
    return sigmas


def _load_keypoint_file(location: str):
    payload = read_bytes(location)
    try:
        text = payload.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{location}: keypoint file is not text") from exc
    return read_keypoints(text, location)


def _mask_location(location: str, pair: str, several: bool) -> str:
    if not several:
        return location
    path = PurePosixPath(location)
    return location[: len(location) - len(path.name)] + f"{path.stem}_{pair}{path.suffix or '.pgm'}"


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_detect(args: argparse.Namespace) -> int:
    params = _detector_params(args)
    threads = _threads(args)

    image = load_pgm(args.image)
    _check_size(image, args.image)
    pyramid = build_pyramid(image, params.n_levels, params.scale_factor)
    keypoints = detect_pyramid(pyramid, params, threads=threads)

    _emit(format_keypoints(keypoints, args.format), args.output)
    if args.overlay:
        save_pgm(annotate(image, keypoints), args.overlay)
    logger.info(
        "Keypoints written",
        extra={"image": args.image, "keypoints": len(keypoints), "levels": len(pyramid)},
    )
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    if not args.output:
        raise ParameterError("synth needs an output directory (-o)")
    ext = args.format

    if args.pattern == "chessboard":
        sigmas = _parse_sigmas(args.sigmas)
        if args.square < 1 or args.width < 1 or args.height < 1:
            raise ParameterError("--width, --height and --square must be >= 1")
        images = blur_sequence(args.width, args.height, args.square, sigmas)
        for sigma, image in zip(sigmas, images):
            save_pgm(image, join_location(args.output, f"chessboard_sigma{sigma:g}.pgm"))
        corners = chessboard_corners(args.width, args.height, args.square)
        write_bytes(
            join_location(args.output, f"chessboard_corners.{ext}"),
            format_ground_truth(corners, ext).encode("utf-8"),
        )
        logger.info(
            "Chessboard sequence written",
            extra={"output": args.output, "images": len(images), "corners": len(corners)},
        )
        return EXIT_OK

    if args.homography:
        homography = load_homography(args.homography)
    elif args.identity:
        homography = Homography.identity()
    else:
        homography = Homography(DEFAULT_PERSPECTIVE)
    spec = SinusoidSpec(
        width=args.width,
        height=args.height,
        wavelength=args.wavelength,
        homography=homography,
        contrast=args.contrast,
    )
    image, saddles = sinusoid(spec)
    save_pgm(image, join_location(args.output, "sinusoid.pgm"))
    write_bytes(
        join_location(args.output, f"sinusoid_saddles.{ext}"),
        format_ground_truth(saddles, ext).encode("utf-8"),
    )
    logger.info("Sinusoid written", extra={"output": args.output, "saddles": len(saddles)})
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    params = _detector_params(args)
    threads = _threads(args)
    if len(args.homography) != len(args.targets):
        raise ParameterError(
            f"Got {len(args.homography)} homographies for {len(args.targets)} targets."
        )
    if args.keypoints is not None and len(args.keypoints) != len(args.targets) + 1:
        raise ParameterError(
            f"--keypoints needs {len(args.targets) + 1} files (reference plus one per target)."
        )
    if not args.tolerance >= 0.0:
        raise ParameterError(f"--tolerance must be >= 0; got {args.tolerance}")
    if not args.disk_radius > 0.0:
        raise ParameterError(f"--disk-radius must be > 0; got {args.disk_radius}")

    homographies = [load_homography(location) for location in args.homography]
    reference = load_pgm(args.reference)
    targets = [
        (_stem(location), load_pgm(location), h)
        for location, h in zip(args.targets, homographies)
    ]
    keypoint_lists = None
    if args.keypoints is not None:
        keypoint_lists = [_load_keypoint_file(location) for location in args.keypoints]

    report = evaluate_sequence(
        reference,
        targets,
        params,
        tolerance=args.tolerance,
        disk_radius=args.disk_radius,
        threads=threads,
        reference_keypoints=None if keypoint_lists is None else keypoint_lists[0],
        target_keypoints=None if keypoint_lists is None else keypoint_lists[1:],
    )

    _emit(format_summary(report, args.format), args.output)
    if args.curve_out:
        write_bytes(args.curve_out, format_curve(report, args.format).encode("utf-8"))
    if args.mask_out:
        several = len(report.pairs) > 1
        for pair in report.pairs:
            mask = GrayImage(np.where(pair.mask, 255, 0).astype(np.uint8))
            save_pgm(mask, _mask_location(args.mask_out, pair.name, several))
    return EXIT_OK


def _time_stages(location: str, params: DetectorParams, threads: int) -> dict[str, float]:
    timings: dict[str, float] = {}

    start = time.perf_counter()
    image = load_pgm(location)
    timings["load"] = time.perf_counter() - start

    start = time.perf_counter()
    pyramid = build_pyramid(image, params.n_levels, params.scale_factor)
    timings["pyramid"] = time.perf_counter() - start

    start = time.perf_counter()
    keypoints = detect_pyramid(pyramid, params, threads=threads)
    timings["detect"] = time.perf_counter() - start

    start = time.perf_counter()
    descriptors = describe(pyramid, keypoints)
    timings["describe"] = time.perf_counter() - start

    start = time.perf_counter()
    match(descriptors, descriptors)
    timings["match"] = time.perf_counter() - start
    return timings


def cmd_bench(args: argparse.Namespace) -> int:
    params = _detector_params(args)
    threads = _threads(args)
    if not args.images:
        raise ParameterError("bench needs at least one image")
    if args.repeat < MIN_REPEAT:
        raise ParameterError(f"--repeat must be >= {MIN_REPEAT}; got {args.repeat}")

    samples: dict[str, list[float]] = {stage: [] for stage in BENCH_STAGES}
    for location in args.images:
        _check_size(load_pgm(location), location)
        _time_stages(location, params, threads)  # warm-up
        for _ in range(args.repeat):
            for stage, seconds in _time_stages(location, params, threads).items():
                samples[stage].append(seconds * 1000.0)

    rows = [
        (stage, float(np.mean(samples[stage])), float(np.std(samples[stage])))
        for stage in BENCH_STAGES
    ]
    _emit(format_bench(rows, args.format), args.output)
    logger.info(
        "Benchmark completed",
        extra={"images": len(args.images), "repeat": args.repeat, "threads": threads},
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def main(argv: list[str] | None = None) -> int:
    """Parse ``argv``, run the subcommand, and return the exit code."""
    start_time = time.perf_counter()
    command = None
    try:
        logger.setLevel(get_config().log_level)
        args = build_parser().parse_args(argv)
        command = args.command
        code = args.handler(args)

        duration_sec = time.perf_counter() - start_time
        log_extra = {"command": command, "duration_ms": round(duration_sec * 1000)}
        if duration_sec >= _DURATION_LOG_THRESHOLD_SEC:
            logger.info("Command completed", extra=log_extra)
        else:
            logger.debug("Command completed", extra=log_extra)
        return code

    except SaddleError as exc:
        code = exit_code_for(exc)
        logger.error(
            "Command failed",
            extra={
                "command": command,
                "error_type": type(exc).__name__,
                "error_message": str(exc),
                "exit_code": code,
                "duration_ms": round((time.perf_counter() - start_time) * 1000),
            },
        )
        print(f"saddle: error: {exc}", file=sys.stderr)
        return code

    except Exception as exc:
        logger.exception(
            "Command failed unexpectedly",
            extra={
                "command": command,
                "error_type": type(exc).__name__,
                "error_message": str(exc),
                "exit_code": EXIT_UNEXPECTED,
                "duration_ms": round((time.perf_counter() - start_time) * 1000),
            },
        )
        print(f"saddle: unexpected error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    # Re-import so that library modules and this entry point share one set of
    # exception classes.
    from src.cli import main as _main

    sys.exit(_main())
