"""Tests for the raster type, PGM codec and scale pyramid (src/imageio.py).

Covers:
- GrayImage: validation, immutability, equality.
- decode_pgm / load_pgm / save_pgm: P5 and P2, comments, header errors.
- downsample: dimensions, bilinear value, constant and offset behaviour.
- build_pyramid: level-size recurrence and the 16 px floor.
"""

from __future__ import annotations

import numpy as np
import pytest

from src.cli import FormatError, ParameterError, SourceError
from src.imageio import (
    MIN_LEVEL_SIZE,
    GrayImage,
    build_pyramid,
    decode_pgm,
    downsample,
    encode_pgm,
    load_pgm,
    round_half_up,
    save_pgm,
)


# ---------------------------------------------------------------------------
# GrayImage
# ---------------------------------------------------------------------------


class TestGrayImage:
    def test_from_values_row_major(self):
        image = GrayImage.from_values(2, 2, [0, 255, 128, 64])
        assert image.width == 2
        assert image.height == 2
        assert image.data.tolist() == [[0, 255], [128, 64]]

    def test_data_is_read_only_copy(self):
        source = np.zeros((3, 3), dtype=np.uint8)
        image = GrayImage(source)
        source[0, 0] = 9
        assert image.data[0, 0] == 0
        with pytest.raises(ValueError):
            image.data[0, 0] = 1

    def test_wrong_value_count(self):
        with pytest.raises(ParameterError, match="Expected 4"):
            GrayImage.from_values(2, 2, [1, 2, 3])

    def test_out_of_range_values(self):
        with pytest.raises(ParameterError, match=r"\[0, 255\]"):
            GrayImage(np.array([[0, 256]]))

    def test_non_integral_values(self):
        with pytest.raises(ParameterError, match="integers"):
            GrayImage(np.array([[0.5, 1.0]]))

    def test_rejects_non_2d(self):
        with pytest.raises(ParameterError, match="2-D"):
            GrayImage(np.zeros((2, 2, 3)))

    def test_equality_by_content(self):
        a = GrayImage(np.arange(6).reshape(2, 3))
        b = GrayImage(np.arange(6).reshape(2, 3))
        assert a == b
        assert a != GrayImage(np.arange(6).reshape(3, 2))


# ---------------------------------------------------------------------------
# PGM codec
# ---------------------------------------------------------------------------


class TestDecodePgm:
    def test_binary_p5(self):
        image = decode_pgm(b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64]))
        assert image.data.ravel().tolist() == [0, 255, 128, 64]

    def test_ascii_p2(self):
        image = decode_pgm(b"P2 1 1 255 7")
        assert (image.width, image.height) == (1, 1)
        assert image.data[0, 0] == 7

    def test_header_comments(self):
        payload = b"P5\n# created by hand\n3 1\n# depth\n255\n" + bytes([1, 2, 3])
        assert decode_pgm(payload).data.tolist() == [[1, 2, 3]]

    def test_p2_comments_in_data(self):
        image = decode_pgm(b"P2\n2 1\n255\n10 # first\n20\n")
        assert image.data.tolist() == [[10, 20]]

    def test_p5_binary_byte_that_looks_like_whitespace(self):
        # The single separator byte is consumed; a leading raster value of 10
        # ("\n") is data, not header whitespace.
        image = decode_pgm(b"P5 2 1 255\n" + bytes([10, 32]))
        assert image.data.tolist() == [[10, 32]]

    def test_maxval_above_255(self):
        with pytest.raises(FormatError, match="maxval"):
            decode_pgm(b"P5\n1 1\n65535\n\x00\x00")

    def test_missing_field_is_named(self):
        with pytest.raises(FormatError, match="height"):
            decode_pgm(b"P5\n4\n")

    def test_bad_magic(self):
        with pytest.raises(FormatError, match="magic"):
            decode_pgm(b"P6\n1 1\n255\n\x00\x00\x00")

    def test_non_integer_width(self):
        with pytest.raises(FormatError, match="width"):
            decode_pgm(b"P5\nx 1\n255\n\x00")

    def test_truncated_p5(self):
        with pytest.raises(FormatError, match="truncated"):
            decode_pgm(b"P5\n4 4\n255\n" + bytes(10))

    def test_truncated_p2(self):
        with pytest.raises(FormatError, match="truncated"):
            decode_pgm(b"P2\n2 2\n255\n1 2 3")

    def test_p2_value_above_maxval(self):
        with pytest.raises(FormatError, match="exceeds maxval"):
            decode_pgm(b"P2\n1 1\n100\n101")

    def test_location_in_message(self):
        with pytest.raises(FormatError, match="scene.pgm"):
            decode_pgm(b"P5\n", "scene.pgm")


class TestSaveLoad:
    def test_round_trip_random_image(self, tmp_path):
        rng = np.random.default_rng(7)
        image = GrayImage(rng.integers(0, 256, size=(64, 64), dtype=np.uint8))
        location = str(tmp_path / "nested" / "random.pgm")
        save_pgm(image, location)
        assert load_pgm(location) == image

    def test_round_trip_single_pixel(self, tmp_path):
        image = GrayImage(np.array([[200]]))
        save_pgm(image, str(tmp_path / "one.pgm"))
        assert load_pgm(str(tmp_path / "one.pgm")) == image

    def test_encode_header(self):
        payload = encode_pgm(GrayImage(np.zeros((2, 3))))
        assert payload.startswith(b"P5\n3 2\n255\n")
        assert len(payload) == len(b"P5\n3 2\n255\n") + 6

    def test_missing_file(self, tmp_path):
        with pytest.raises(SourceError, match="not found"):
            load_pgm(str(tmp_path / "absent.pgm"))


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------


class TestDownsample:
    def test_round_half_up(self):
        assert round_half_up(2.5) == 3
        assert round_half_up(-2.5) == -2
        assert round_half_up(161.5) == 162

    def test_two_by_two_to_one(self):
        image = GrayImage(np.array([[0, 255], [0, 255]]))
        out = downsample(image, 2.0)
        assert (out.width, out.height) == (1, 1)
        assert out.data[0, 0] == 128

    def test_row_interpolation(self):
        out = downsample(GrayImage(np.array([[0, 40, 80, 120]])), 2.0)
        assert out.data.tolist() == [[20, 100]]

    def test_dimensions(self):
        out = downsample(GrayImage(np.zeros((100, 100))), 1.3)
        assert (out.width, out.height) == (77, 77)

    def test_constant_stays_constant(self):
        out = downsample(GrayImage(np.full((50, 37), 77)), 1.3)
        assert np.all(out.data == 77)

    def test_additive_offset_commutes(self, textured):
        image = textured(3, 60, 45)
        shifted = GrayImage(image.data.astype(np.int16) + 30)
        expected = downsample(image, 1.3).data.astype(np.int16) + 30
        assert np.array_equal(downsample(shifted, 1.3).data, expected)

    @pytest.mark.parametrize("factor", [1.0, 0.5])
    def test_factor_must_exceed_one(self, factor):
        with pytest.raises(ParameterError, match="> 1"):
            downsample(GrayImage(np.zeros((8, 8))), factor)


class TestBuildPyramid:
    def test_default_six_levels(self):
        pyramid = build_pyramid(GrayImage(np.zeros((600, 900))), 6, 1.3)
        assert [lvl.width for lvl in pyramid.levels] == [900, 692, 532, 409, 315, 242]
        assert [lvl.height for lvl in pyramid.levels] == [600, 462, 355, 273, 210, 162]

    def test_level_zero_is_source(self):
        image = GrayImage(np.arange(400).reshape(20, 20) % 256)
        assert build_pyramid(image, 6, 1.3).levels[0] is image

    def test_stops_before_level_below_minimum(self):
        # 20 -> 15 would violate the 16 px floor.
        assert len(build_pyramid(GrayImage(np.zeros((20, 20))), 6, 1.3)) == 1
        sizes = [lvl.width for lvl in build_pyramid(GrayImage(np.zeros((21, 21))), 6, 1.3).levels]
        assert sizes == [21, 16]

    def test_every_level_respects_minimum(self):
        pyramid = build_pyramid(GrayImage(np.zeros((40, 300))), 20, 1.3)
        assert all(min(lvl.width, lvl.height) >= MIN_LEVEL_SIZE for lvl in pyramid.levels)

    def test_single_level(self):
        assert len(build_pyramid(GrayImage(np.zeros((64, 64))), 1, 1.3)) == 1

    def test_level_scales(self):
        pyramid = build_pyramid(GrayImage(np.zeros((100, 100))), 3, 1.5)
        assert pyramid.level_scales == pytest.approx((1.0, 1.5, 2.25))

    def test_rejects_zero_levels(self):
        with pytest.raises(ParameterError, match="at least one level"):
            build_pyramid(GrayImage(np.zeros((64, 64))), 0, 1.3)

    def test_rejects_factor_one(self):
        with pytest.raises(ParameterError, match="> 1"):
            build_pyramid(GrayImage(np.zeros((64, 64))), 3, 1.0)
