"""Shared pytest fixtures for the Saddle test suite.

Images are generated in-process apart from the photographs in ``tests/data/``;
S3 access is mocked with moto, so no test touches the network.
"""

from __future__ import annotations

import os
from pathlib import Path

import boto3
import numpy as np
import pytest
from moto import mock_aws

from src.imageio import GrayImage, save_pgm
from src.synth import gaussian_blur

BUCKET = "saddle-test-bucket"

DATA_DIR = Path(__file__).parent / "data"


def sample_photographs() -> list[Path]:
    """Bundled photographs, or the ``*.pgm`` files under ``SADDLE_SAMPLE_IMAGES`` when set."""
    override = os.environ.get("SADDLE_SAMPLE_IMAGES")
    return sorted((Path(override) if override else DATA_DIR).glob("*.pgm"))


# ---------------------------------------------------------------------------
# Process caches
# ---------------------------------------------------------------------------


@pytest.fixture(autouse=True)
def _reset_caches():
    """Drop the cached Config and byte sources around every test."""
    import src.config as cfg_mod
    import src.sources as sources_mod

    cfg_mod._config = None
    sources_mod._cache.clear()
    yield
    cfg_mod._config = None
    sources_mod._cache.clear()


# ---------------------------------------------------------------------------
# Image helpers
# ---------------------------------------------------------------------------


def make_textured(seed: int, width: int, height: int, sigma: float = 1.5,
                  low: int = 40, high: int = 215) -> GrayImage:
    """Blurred uniform noise stretched to ``[low, high]``."""
    rng = np.random.default_rng(seed)
    noise = GrayImage(rng.integers(0, 256, size=(height, width), dtype=np.uint8))
    blurred = gaussian_blur(noise, sigma).data.astype(np.float64)
    lo, hi = blurred.min(), blurred.max()
    scaled = low + (blurred - lo) * (high - low) / max(hi - lo, 1.0)
    return GrayImage(np.floor(scaled + 0.5))


def constant_image(width: int, height: int, value: int = 77) -> GrayImage:
    return GrayImage(np.full((height, width), value, dtype=np.uint8))


@pytest.fixture
def textured():
    """Factory for deterministic textured test images."""
    return make_textured


@pytest.fixture
def write_pgm(tmp_path):
    """Save an image under ``tmp_path`` and return its path as a string."""

    def _write(image: GrayImage, name: str = "image.pgm") -> str:
        location = str(tmp_path / name)
        save_pgm(image, location)
        return location

    return _write


# ---------------------------------------------------------------------------
# S3 fixture
# ---------------------------------------------------------------------------


@pytest.fixture
def s3_bucket():
    """Create a mocked S3 bucket and route ``s3://`` locations to it."""
    with mock_aws():
        client = boto3.client("s3", region_name="us-east-1")
        client.create_bucket(Bucket=BUCKET)

        import src.sources as sources_mod
        from src.sources.s3 import S3Source

        sources_mod._cache["s3"] = S3Source(client)
        yield client
