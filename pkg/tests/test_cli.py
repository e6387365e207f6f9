"""Tests for the command-line entry point (src/cli.py).

Covers:
- detect: CSV/JSON output, --max-features, overlay, S3 locations.
- synth: chessboard sequence and sinusoid outputs.
- eval: summary, curve and mask outputs, precomputed keypoints.
- bench: one row per stage.
- Exit codes: 1 for unexpected failures, 2 for I/O and format errors,
  3 for parameter errors.
"""

from __future__ import annotations

import json
from unittest.mock import MagicMock

import botocore.exceptions
import numpy as np
import pytest

import src.sources as sources
from src.cli import (
    EXIT_IO,
    EXIT_OK,
    EXIT_PARAMETER,
    EXIT_UNEXPECTED,
    MIN_REPEAT,
    FormatError,
    GeometryError,
    ParameterError,
    SourceError,
    UndefinedRatioError,
    exit_code_for,
    main,
)
from src.imageio import GrayImage, load_pgm, save_pgm
from src.reports import read_keypoints
from src.sources.s3 import S3Source
from tests.conftest import BUCKET, constant_image, make_textured

KEYPOINT_HEADER = "x,y,scale,level,response"


def _write_text(tmp_path, name: str, text: str) -> str:
    path = tmp_path / name
    path.write_text(text)
    return str(path)


# ---------------------------------------------------------------------------
# Exit codes
# ---------------------------------------------------------------------------


class TestExitCodes:
    @pytest.mark.parametrize(
        "exc, code",
        [
            (FormatError("x"), EXIT_IO),
            (SourceError("x"), EXIT_IO),
            (ParameterError("x"), EXIT_PARAMETER),
            (UndefinedRatioError("x"), EXIT_PARAMETER),
            (GeometryError("x"), EXIT_PARAMETER),
        ],
    )
    def test_mapping(self, exc, code):
        assert exit_code_for(exc) == code

    def test_unknown_flag(self, capsys):
        assert main(["detect", "img.pgm", "--bogus"]) == EXIT_PARAMETER
        assert "saddle: error:" in capsys.readouterr().err

    def test_missing_subcommand(self):
        assert main([]) == EXIT_PARAMETER

    def test_non_numeric_flag(self, write_pgm):
        location = write_pgm(constant_image(32, 32))
        assert main(["detect", location, "--epsilon", "wide"]) == EXIT_PARAMETER

    def test_s3_without_credentials(self, capsys):
        client = MagicMock()
        client.get_object.side_effect = botocore.exceptions.NoCredentialsError()
        sources._cache["s3"] = S3Source(client)
        assert main(["detect", f"s3://{BUCKET}/img1.pgm"]) == EXIT_UNEXPECTED
        assert "NoCredentialsError" in capsys.readouterr().err

    def test_unexpected_error_in_command(self, write_pgm, monkeypatch):
        location = write_pgm(make_textured(64, 48, 48))

        def broken(*args, **kwargs):
            raise RuntimeError("worker crashed")

        monkeypatch.setattr("src.cli.detect_pyramid", broken)
        assert main(["detect", location]) == EXIT_UNEXPECTED


# ---------------------------------------------------------------------------
# detect
# ---------------------------------------------------------------------------


class TestDetectCommand:
    def test_constant_image_gives_header_only(self, write_pgm, capsys):
        location = write_pgm(constant_image(64, 64))
        assert main(["detect", location]) == EXIT_OK
        assert capsys.readouterr().out == KEYPOINT_HEADER + "\n"

    def test_textured_image(self, write_pgm, capsys):
        location = write_pgm(make_textured(60, 96, 96))
        assert main(["detect", location]) == EXIT_OK
        keypoints = read_keypoints(capsys.readouterr().out)
        assert keypoints
        responses = [kp.response for kp in keypoints]
        assert responses == sorted(responses, reverse=True)

    def test_max_features(self, write_pgm, capsys):
        location = write_pgm(make_textured(61, 96, 96))
        assert main(["detect", location]) == EXIT_OK
        full = capsys.readouterr().out.splitlines()
        assert main(["detect", location, "--max-features", "5"]) == EXIT_OK
        assert capsys.readouterr().out.splitlines() == full[:6]

    def test_json_to_file(self, write_pgm, tmp_path):
        location = write_pgm(make_textured(62, 64, 64))
        out = str(tmp_path / "kps.json")
        assert main(["detect", location, "--format", "json", "-o", out]) == EXIT_OK
        records = json.loads((tmp_path / "kps.json").read_text())
        assert all(set(r) == {"x", "y", "scale", "level", "response"} for r in records)

    def test_deterministic_across_threads(self, write_pgm, capsys):
        location = write_pgm(make_textured(63, 128, 128))
        assert main(["detect", location, "--threads", "1"]) == EXIT_OK
        single = capsys.readouterr().out
        assert main(["detect", location, "--threads", "4"]) == EXIT_OK
        assert capsys.readouterr().out == single

    def test_threads_from_environment(self, write_pgm, monkeypatch):
        monkeypatch.setenv("SADDLE_THREADS", "3")
        assert main(["detect", write_pgm(make_textured(64, 64, 64))]) == EXIT_OK

    def test_overlay(self, write_pgm, tmp_path, capsys):
        image = make_textured(65, 80, 80)
        location = write_pgm(image)
        overlay = str(tmp_path / "overlay.pgm")
        assert main(["detect", location, "--overlay", overlay]) == EXIT_OK
        capsys.readouterr()
        marked = load_pgm(overlay)
        assert (marked.width, marked.height) == (80, 80)
        assert marked != image

    def test_s3_locations(self, s3_bucket, tmp_path):
        image = make_textured(66, 64, 64)
        local = tmp_path / "img.pgm"
        save_pgm(image, str(local))
        s3_bucket.put_object(Bucket=BUCKET, Key="in/img.pgm", Body=local.read_bytes())
        out = f"s3://{BUCKET}/out/kps.csv"
        assert main(["detect", f"s3://{BUCKET}/in/img.pgm", "-o", out]) == EXIT_OK
        body = s3_bucket.get_object(Bucket=BUCKET, Key="out/kps.csv")["Body"].read()
        assert body.decode().startswith(KEYPOINT_HEADER)

    def test_missing_file(self, tmp_path, capsys):
        assert main(["detect", str(tmp_path / "absent.pgm")]) == EXIT_IO
        assert "File not found" in capsys.readouterr().err

    def test_malformed_file(self, tmp_path):
        path = tmp_path / "bad.pgm"
        path.write_bytes(b"P7\n4 4\n255\n")
        assert main(["detect", str(path)]) == EXIT_IO

    def test_image_too_small(self, write_pgm, capsys):
        location = write_pgm(constant_image(10, 40))
        assert main(["detect", location]) == EXIT_PARAMETER
        assert "smaller than 16x16" in capsys.readouterr().err

    @pytest.mark.parametrize(
        "flags",
        [
            ["--epsilon=200"],
            ["--levels", "0"],
            ["--scale-factor", "1.0"],
            ["--max-features", "0"],
            ["--threads", "0"],
        ],
    )
    def test_invalid_parameters(self, write_pgm, flags):
        location = write_pgm(constant_image(32, 32))
        assert main(["detect", location, *flags]) == EXIT_PARAMETER


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


class TestSynthCommand:
    def test_chessboard_sequence(self, tmp_path):
        out = str(tmp_path / "board")
        args = ["synth", "chessboard", "--width", "64", "--height", "48", "--square", "16", "-o", out]
        assert main(args) == EXIT_OK
        for sigma in ("0", "1", "2", "4"):
            image = load_pgm(f"{out}/chessboard_sigma{sigma}.pgm")
            assert (image.width, image.height) == (64, 48)
        lines = (tmp_path / "board" / "chessboard_corners.csv").read_text().splitlines()
        assert lines[0] == "u,v,x,y"
        assert lines[1] == "16.000,16.000,15.500,15.500"
        assert len(lines) == 1 + 3 * 2

    def test_custom_sigmas(self, tmp_path):
        out = str(tmp_path)
        assert main(["synth", "chessboard", "--width", "32", "--height", "32", "--sigmas", "0.5", "-o", out]) == EXIT_OK
        assert (tmp_path / "chessboard_sigma0.5.pgm").exists()

    def test_negative_sigma(self, tmp_path):
        assert main(["synth", "chessboard", "--sigmas=-1", "-o", str(tmp_path)]) == EXIT_PARAMETER

    def test_requires_output(self):
        assert main(["synth", "chessboard"]) == EXIT_PARAMETER

    def test_sinusoid_identity(self, tmp_path):
        out = str(tmp_path)
        args = ["synth", "sinusoid", "--width", "64", "--height", "64", "--identity", "--format", "json", "-o", out]
        assert main(args) == EXIT_OK
        image = load_pgm(str(tmp_path / "sinusoid.pgm"))
        assert (image.width, image.height) == (64, 64)
        saddles = json.loads((tmp_path / "sinusoid_saddles.json").read_text())
        assert sorted((p["x"], p["y"]) for p in saddles) == [
            (float(x), float(y)) for x in (16, 32, 48) for y in (16, 32, 48)
        ]

    def test_sinusoid_homography_file(self, tmp_path):
        h = _write_text(tmp_path, "H", "1 0 4\n0 1 0\n0 0 1\n")
        assert main(["synth", "sinusoid", "--width", "64", "--height", "64", "--homography", h, "-o", str(tmp_path)]) == EXIT_OK
        lines = (tmp_path / "sinusoid_saddles.csv").read_text().splitlines()
        assert lines[1].split(",")[2] == "20.000"

    def test_sinusoid_bad_wavelength(self, tmp_path):
        assert main(["synth", "sinusoid", "--wavelength", "2", "-o", str(tmp_path)]) == EXIT_PARAMETER


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


class TestEvalCommand:
    @pytest.fixture
    def pair(self, tmp_path, write_pgm):
        image = make_textured(70, 128, 128)
        reference = write_pgm(image, "img1.pgm")
        target = write_pgm(image, "img2.pgm")
        homography = _write_text(tmp_path, "H1to2p", "1 0 0\n0 1 0\n0 0 1\n")
        return reference, target, homography

    def test_summary(self, pair, capsys):
        reference, target, homography = pair
        assert main(["eval", reference, target, "--homography", homography]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "pair,tentatives,inliers,inlier_ratio,coverage,matched"
        fields = lines[1].split(",")
        assert fields[0] == "img2"
        assert fields[1] == fields[2]
        assert fields[3] == "1.000000"
        assert fields[5] == "true"

    def test_curve_and_mask(self, pair, tmp_path, capsys):
        reference, target, homography = pair
        curve = str(tmp_path / "curve.csv")
        mask = str(tmp_path / "coverage.pgm")
        args = ["eval", reference, target, "--homography", homography, "--curve-out", curve, "--mask-out", mask]
        assert main(args) == EXIT_OK
        capsys.readouterr()
        rows = (tmp_path / "curve.csv").read_text().splitlines()
        assert rows[0] == "threshold,ratio"
        assert rows[1] == "0.25,1.000000"
        written = load_pgm(mask)
        assert (written.width, written.height) == (128, 128)
        assert set(np.unique(written.data).tolist()) <= {0, 255}
        assert written.data.max() == 255

    def test_several_targets(self, pair, tmp_path, write_pgm, capsys):
        reference, target, homography = pair
        other = write_pgm(make_textured(71, 128, 128), "img3.pgm")
        mask = str(tmp_path / "coverage.pgm")
        args = ["eval", reference, target, other, "--homography", homography, homography, "--mask-out", mask, "--format", "json"]
        assert main(args) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert [p["pair"] for p in payload["pairs"]] == ["img2", "img3"]
        assert payload["matched_pairs"] == 1
        assert (tmp_path / "coverage_img2.pgm").exists()
        assert (tmp_path / "coverage_img3.pgm").exists()

    def test_precomputed_keypoints(self, pair, tmp_path, capsys):
        reference, target, homography = pair
        kps = str(tmp_path / "kps.csv")
        assert main(["detect", reference, "-o", kps]) == EXIT_OK
        args = ["eval", reference, target, "--homography", homography, "--keypoints", kps, kps]
        assert main(args) == EXIT_OK
        fields = capsys.readouterr().out.splitlines()[1].split(",")
        assert fields[5] == "true"

    def test_homography_count_mismatch(self, pair):
        reference, target, homography = pair
        assert main(["eval", reference, target, target, "--homography", homography]) == EXIT_PARAMETER

    def test_singular_homography(self, pair, tmp_path):
        reference, target, _ = pair
        singular = _write_text(tmp_path, "H_bad", "1 2 3\n2 4 6\n0 0 1\n")
        assert main(["eval", reference, target, "--homography", singular]) == EXIT_PARAMETER

    def test_malformed_homography(self, pair, tmp_path):
        reference, target, _ = pair
        short = _write_text(tmp_path, "H_short", "1 0 0\n0 1 0\n")
        assert main(["eval", reference, target, "--homography", short]) == EXIT_IO

    def test_negative_tolerance(self, pair):
        reference, target, homography = pair
        assert main(["eval", reference, target, "--homography", homography, "--tolerance=-1"]) == EXIT_PARAMETER


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


class TestBenchCommand:
    def test_rows_per_stage(self, write_pgm, capsys):
        location = write_pgm(make_textured(80, 64, 64))
        assert main(["bench", location, "--repeat", str(MIN_REPEAT)]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "stage,mean_ms,std_ms"
        assert [line.split(",")[0] for line in lines[1:]] == [
            "load", "pyramid", "detect", "describe", "match",
        ]
        assert all(float(line.split(",")[1]) >= 0.0 for line in lines[1:])

    def test_no_images(self):
        assert main(["bench"]) == EXIT_PARAMETER

    @pytest.mark.parametrize("repeat", ["0", "9"])
    def test_too_few_repetitions(self, write_pgm, repeat):
        assert main(["bench", write_pgm(constant_image(32, 32)), "--repeat", repeat]) == EXIT_PARAMETER

    def test_image_too_small(self, write_pgm):
        image = GrayImage(np.zeros((8, 8), dtype=np.uint8))
        assert main(["bench", write_pgm(image)]) == EXIT_PARAMETER
