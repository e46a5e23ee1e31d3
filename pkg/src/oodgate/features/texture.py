"""GLCM and uniform-LBP texture descriptors on the luminance channel."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from oodgate.errors import TooNarrowError, TooSmallError
from oodgate.imaging import GrayImage

GLCM_LEVELS = 32
LBP_BINS = 59
VARIANCE_EPS = 1e-12

# 8 neighbours at radius 1, starting east and going counter-clockwise
# (row offsets grow downwards, so "north" is dr = -1).
LBP_OFFSETS = ((0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1))


def _transitions(code: int) -> int:
    """Number of circular 0/1 transitions in an 8-bit pattern."""
    rotated = ((code >> 1) | ((code & 1) << 7)) & 0xFF
    return bin(code ^ rotated).count("1")


def _uniform_lut() -> np.ndarray:
    lut = np.full(256, LBP_BINS - 1, dtype=np.int64)
    uniform = [c for c in range(256) if _transitions(c) <= 2]
    lut[uniform] = np.arange(len(uniform))
    return lut


UNIFORM_LUT = _uniform_lut()


@dataclass(frozen=True)
class Glcm:
    matrix: np.ndarray  # (levels, levels), sums to 1
    levels: int = GLCM_LEVELS
    symmetric: bool = True


@dataclass(frozen=True)
class LbpHistogram:
    bins: np.ndarray  # 59 counts; index 58 collects non-uniform codes
    code_image: np.ndarray  # (height - 2, width - 2) codes 0..255


def quantize(gray: GrayImage, levels: int = GLCM_LEVELS) -> np.ndarray:
    # values are non-negative, so truncation is floor; 1/step is exact for power-of-two steps
    q = (gray.values * (levels / 256.0)).astype(np.int64)
    return np.minimum(q, levels - 1, out=q)


def compute_glcm(gray: GrayImage) -> Glcm:
    """Symmetric, normalized co-occurrence matrix for the (+1, 0) offset."""
    if gray.width < 2:
        raise TooNarrowError("GLCM needs width >= 2")
    q = quantize(gray)
    pairs = q[:, :-1] * GLCM_LEVELS + q[:, 1:]
    counts = np.bincount(pairs.ravel(), minlength=GLCM_LEVELS**2).reshape(GLCM_LEVELS, GLCM_LEVELS)
    counts = counts + counts.T
    return Glcm(counts / counts.sum())


def glcm_features(g: Glcm) -> dict[str, float]:
    p = g.matrix
    i, j = np.indices(p.shape, dtype=np.float64)
    d2 = (i - j) ** 2
    mu = float(np.sum(i * p))
    var = float(np.sum((i - mu) ** 2 * p))
    if var < VARIANCE_EPS:
        corr = 0.0
    else:
        corr = float(np.sum((i - mu) * (j - mu) * p)) / var
    return {
        "glcm_contrast": float(np.sum(p * d2)),
        "glcm_homogeneity": float(np.sum(p / (1.0 + d2))),
        "glcm_energy": float(np.sum(p * p)),
        "glcm_correlation": corr,
    }


def compute_lbp(gray: GrayImage) -> LbpHistogram:
    """8-neighbour, radius-1 LBP with uniform mapping; border pixels skipped.

    A bit is set when the neighbour is >= the centre.
    """
    if gray.width < 3 or gray.height < 3:
        raise TooSmallError("LBP needs at least a 3x3 image")
    y = gray.values
    h, w = y.shape
    centre = y[1:-1, 1:-1]
    codes = np.zeros(centre.shape, dtype=np.uint8)
    for bit, (dr, dc) in enumerate(LBP_OFFSETS):
        neighbour = y[1 + dr : h - 1 + dr, 1 + dc : w - 1 + dc]
        codes |= (neighbour >= centre).view(np.uint8) << np.uint8(bit)
    bins = np.bincount(UNIFORM_LUT[codes].ravel(), minlength=LBP_BINS)
    return LbpHistogram(bins, codes)


def lbp_features(h: LbpHistogram) -> dict[str, float]:
    codes = h.code_image
    if codes.size == 0:
        return {"lbp_mean": 0.0, "lbp_var": 0.0}
    c = codes.astype(np.float64)
    return {"lbp_mean": float(c.mean()), "lbp_var": float(c.var())}
