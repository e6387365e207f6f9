"""Tests for the synthetic pattern generators (src/synth.py)."""

from __future__ import annotations

import numpy as np
import pytest

from src.cli import ParameterError
from src.detector import Shape, detect, inner_test
from src.geometry import Homography
from src.imageio import GrayImage
from src.synth import (
    DEFAULT_PERSPECTIVE,
    SinusoidSpec,
    blur_sequence,
    chessboard,
    chessboard_corners,
    gaussian_blur,
    gaussian_kernel,
    sinusoid,
    sinusoid_intensity,
)
from tests.conftest import constant_image


class TestChessboard:
    def test_parity(self):
        board = chessboard(4, 4, 2)
        assert board.data.tolist() == [
            [255, 255, 0, 0],
            [255, 255, 0, 0],
            [0, 0, 255, 255],
            [0, 0, 255, 255],
        ]

    def test_cropped(self):
        board = chessboard(10, 3, 4)
        assert (board.width, board.height) == (10, 3)
        assert board.data[0].tolist() == [255] * 4 + [0] * 4 + [255] * 2

    def test_square_equal_to_width(self):
        board = chessboard(8, 16, 8)
        assert np.all(board.data[:8] == 255)
        assert np.all(board.data[8:] == 0)

    def test_rejects_zero_square(self):
        with pytest.raises(ParameterError):
            chessboard(8, 8, 0)

    def test_corners(self):
        corners = chessboard_corners(64, 48, 16)
        assert len(corners) == 3 * 2
        assert (corners[0].u, corners[0].v) == (16.0, 16.0)
        assert (corners[0].x, corners[0].y) == (15.5, 15.5)
        assert (corners[-1].x, corners[-1].y) == (47.5, 31.5)

    @pytest.mark.parametrize("sigma", [0.0, 1.0, 2.0, 4.0])
    def test_corners_remain_saddles_after_blur(self, sigma):
        board = gaussian_blur(chessboard(64, 64, 16), sigma)
        result = inner_test(board, 16, 16)
        assert Shape.CROSS in result.shapes


class TestGaussianBlur:
    def test_sigma_zero_is_identity(self, textured):
        image = textured(0, 20, 20)
        assert gaussian_blur(image, 0.0) == image

    def test_constant_preserved(self):
        image = constant_image(30, 20, value=93)
        assert gaussian_blur(image, 2.5) == image

    def test_kernel_normalised(self):
        kernel = gaussian_kernel(1.7)
        assert kernel.size == 2 * 6 + 1
        assert kernel.sum() == pytest.approx(1.0)

    def test_impulse(self):
        data = np.zeros((21, 21), dtype=np.uint8)
        data[10, 10] = 255
        blurred = gaussian_blur(GrayImage(data), 1.0)
        assert blurred.data[10, 10] == 41
        assert blurred.data[10, 14] == 0

    def test_edge_replication(self):
        data = np.zeros((9, 9), dtype=np.uint8)
        data[:, 0] = 200
        blurred = gaussian_blur(GrayImage(data), 1.0)
        # The bright first column is replicated outward, so it stays above half.
        assert blurred.data[4, 0] > 100

    def test_negative_sigma(self):
        with pytest.raises(ParameterError, match="sigma"):
            gaussian_blur(constant_image(8, 8), -1.0)

    def test_blur_sequence(self):
        images = blur_sequence(64, 64, 16, [0, 1, 2, 4])
        assert len(images) == 4
        assert images[0] == chessboard(64, 64, 16)
        assert images[3] != images[0]


class TestSinusoid:
    def test_identity_lattice(self):
        image, saddles = sinusoid(SinusoidSpec(256, 256, wavelength=32.0))
        assert (image.width, image.height) == (256, 256)
        assert len(saddles) == 15 * 15
        xs = sorted({round(p.x, 6) for p in saddles})
        assert xs == [16.0 * k for k in range(1, 16)]
        assert all(p.x == p.u and p.y == p.v for p in saddles)

    def test_values_at_known_points(self):
        image, _ = sinusoid(SinusoidSpec(64, 64, wavelength=32.0))
        assert image.data[8, 8] == 255
        assert image.data[8, 24] == 0
        assert image.data[24, 24] == 255

    def test_zero_contrast_is_flat(self):
        image, _ = sinusoid(SinusoidSpec(128, 128, contrast=0.0))
        assert np.all(image.data == 128)
        assert detect(image) == []

    def test_point_symmetry(self):
        spec = SinusoidSpec(257, 257, wavelength=32.0)
        image, _ = sinusoid(spec)
        rotated = image.data[::-1, ::-1].astype(np.int16)
        assert np.abs(image.data.astype(np.int16) - rotated).max() <= 1

    def test_ground_truth_inside_margin(self):
        spec = SinusoidSpec(200, 160, homography=Homography(DEFAULT_PERSPECTIVE))
        _, saddles = sinusoid(spec)
        assert saddles
        for p in saddles:
            assert 8.0 <= p.x <= 200 - 1 - 8.0
            assert 8.0 <= p.y <= 160 - 1 - 8.0

    def test_ground_truth_has_negative_hessian(self):
        spec = SinusoidSpec(256, 256, homography=Homography(DEFAULT_PERSPECTIVE))
        _, saddles = sinusoid(spec)
        h = 1.0
        for p in saddles:
            f = lambda dx, dy: sinusoid_intensity(spec, p.x + dx, p.y + dy)  # noqa: E731
            fxx = f(h, 0) - 2 * f(0, 0) + f(-h, 0)
            fyy = f(0, h) - 2 * f(0, 0) + f(0, -h)
            fxy = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / 4.0
            assert fxx * fyy - fxy * fxy < 0

    def test_intensity_matches_rendering(self):
        spec = SinusoidSpec(64, 64, homography=Homography(DEFAULT_PERSPECTIVE))
        image, _ = sinusoid(spec)
        value = sinusoid_intensity(spec, 20.0, 33.0)
        assert abs(int(image.data[33, 20]) - value) <= 0.5 + 1e-9

    @pytest.mark.parametrize(
        "kwargs, message",
        [
            ({"wavelength": 4.0}, "wavelength"),
            ({"contrast": 1.5}, "contrast"),
            ({"contrast": -0.1}, "contrast"),
        ],
    )
    def test_invalid_sinusoid_settings(self, kwargs, message):
        with pytest.raises(ParameterError, match=message):
            SinusoidSpec(64, 64, **kwargs)
