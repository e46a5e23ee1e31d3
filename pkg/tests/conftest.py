import numpy as np
import pytest

from oodgate.imaging import GrayImage, RasterImage


def disc_bits(size: int, radius: float, center=None) -> np.ndarray:
    cy, cx = center if center is not None else ((size - 1) / 2, (size - 1) / 2)
    yy, xx = np.mgrid[:size, :size]
    return (xx - cx) ** 2 + (yy - cy) ** 2 <= radius**2


def gray_of(values) -> GrayImage:
    return GrayImage(np.asarray(values, dtype=np.float64))


def rgb_of(arr) -> RasterImage:
    return RasterImage.from_array(np.asarray(arr, dtype=np.uint8))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """24 PNM images (12 per class) with a manifest, shared across modules."""
    from oodgate.corpus import generate_synthetic_corpus

    out = tmp_path_factory.mktemp("tiny_corpus")
    manifest = generate_synthetic_corpus(out, 12, seed=7, image_format="pnm")
    return out, manifest
