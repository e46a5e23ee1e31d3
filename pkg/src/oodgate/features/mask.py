"""Foreground (retinal field) mask extraction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from oodgate.imaging import GrayImage

MIN_AREA_FRACTION = 0.005


@dataclass(frozen=True)
class BinaryMask:
    bits: np.ndarray  # bool, (height, width)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def area(self) -> int:
        return int(np.count_nonzero(self.bits))


def otsu_threshold(hist: np.ndarray) -> int | None:
    """Otsu threshold over a 256-bin histogram.

    Returns the bin index ``t`` maximizing between-class variance for the split
    ``bins <= t`` vs ``bins > t`` (lowest ``t`` on ties), or ``None`` when the
    histogram has fewer than two occupied bins.
    """
    hist = np.asarray(hist, dtype=np.float64)
    if np.count_nonzero(hist) < 2:
        return None
    levels = np.arange(hist.size, dtype=np.float64)
    w0 = np.cumsum(hist)
    m0 = np.cumsum(hist * levels)
    total, mtotal = w0[-1], m0[-1]
    w1 = total - w0
    valid = (w0 > 0) & (w1 > 0)
    between = np.zeros_like(w0)
    mu0 = m0[valid] / w0[valid]
    mu1 = (mtotal - m0[valid]) / w1[valid]
    between[valid] = w0[valid] * w1[valid] * (mu0 - mu1) ** 2
    return int(np.argmax(between))


def extract_mask(gray: GrayImage) -> BinaryMask:
    """Otsu foreground, largest 4-connected component, interior holes filled.

    A mask covering less than 0.5% of the image is returned empty.
    """
    y = gray.values
    bins = np.clip(y, 0, 255).astype(np.uint8)
    t = otsu_threshold(np.bincount(bins.ravel(), minlength=256))
    empty = BinaryMask(np.zeros(y.shape, dtype=bool))
    if t is None:
        return empty
    fg = bins > t
    labels, n = ndimage.label(fg)
    if n == 0:
        return empty
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    keep = labels == int(np.argmax(sizes))
    box = ndimage.find_objects(keep.view(np.uint8))[0]
    filled = np.zeros_like(keep)
    filled[box] = ndimage.binary_fill_holes(keep[box])
    if np.count_nonzero(filled) < MIN_AREA_FRACTION * filled.size:
        return empty
    return BinaryMask(filled)
