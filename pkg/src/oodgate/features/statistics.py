"""Intensity, color, spatial and global image statistics."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from oodgate.errors import TooSmallError
from oodgate.imaging import GrayImage, HsvImage, RasterImage

DARK_THRESHOLD = 32.0
BLACK_THRESHOLD = 10.0
RADIAL_BINS = 10
ASYMMETRY_EPS = 1e-6
RGB_SPREAD = 2
RGB_MIN_FRACTION = 0.01
CORNER_FRACTION = 0.05


def percentile_index(n: int, q: float) -> int:
    return int(math.floor(q / 100.0 * (n - 1)))


def lower_percentiles(values: np.ndarray, qs) -> list[float]:
    """Non-interpolating percentiles: the sorted value at index ``floor(q/100 * (n-1))``."""
    flat = values.ravel()
    idx = [percentile_index(flat.size, q) for q in qs]
    part = np.partition(flat, idx)
    return [float(part[i]) for i in idx]


def border_ring(values: np.ndarray) -> np.ndarray:
    """The 1-pixel-thick outer ring of a 2-D array, each pixel once."""
    h, w = values.shape
    if h <= 2 or w <= 2:
        return values.ravel()
    return np.concatenate([values[0], values[-1], values[1:-1, 0], values[1:-1, -1]])


def intensity_background_features(gray: GrayImage, dark_threshold: float = DARK_THRESHOLD) -> dict[str, float]:
    y = gray.values
    p05, p95 = lower_percentiles(y, (5, 95))
    return {
        "gray_min": float(y.min()),
        "gray_max": float(y.max()),
        "gray_mean": float(y.mean()),
        "gray_var": float(y.var()),
        "gray_p05": p05,
        "gray_p95": p95,
        "background_dark_flag": float(border_ring(y).mean() < dark_threshold),
    }


def circular_stats(hue_degrees: np.ndarray) -> tuple[float, float]:
    """Circular mean in (-180, 180] degrees and circular variance ``1 - R``."""
    if hue_degrees.size == 0:
        return 0.0, 0.0
    rad = np.deg2rad(hue_degrees)
    s = float(np.mean(np.sin(rad)))
    c = float(np.mean(np.cos(rad)))
    resultant = math.hypot(s, c)
    mean = math.degrees(math.atan2(s, c)) if resultant > 0 else 0.0
    return mean, min(1.0, max(0.0, 1.0 - resultant))


def color_features(hsv: HsvImage | None, rgb: RasterImage, gray: GrayImage | None = None) -> dict[str, float]:
    """HSV statistics. Hue statistics use chromatic pixels only (S > 0).

    For single-channel images the hue and saturation entries are 0 and the
    value statistics come from ``Y / 255``.
    """
    if rgb.channels != 3 or hsv is None:
        if gray is None:
            v = rgb.pixels[:, :, 0].astype(np.float64) / 255.0
        else:
            v = gray.values / 255.0
        return {
            "hue_mean": 0.0,
            "hue_var": 0.0,
            "sat_mean": 0.0,
            "sat_var": 0.0,
            "val_mean": float(v.mean()),
            "val_var": float(v.var()),
        }
    chromatic = hsv.saturation > 0
    hue_mean, hue_var = circular_stats(hsv.hue[chromatic])
    return {
        "hue_mean": hue_mean,
        "hue_var": hue_var,
        "sat_mean": float(hsv.saturation.mean()),
        "sat_var": float(hsv.saturation.var()),
        "val_mean": float(hsv.value.mean()),
        "val_var": float(hsv.value.var()),
    }


def _safe_mean(x: np.ndarray) -> float:
    return float(x.mean()) if x.size else 0.0


@lru_cache(maxsize=16)
def _radial_geometry(h: int, w: int):
    """Per-pixel radial bin (RADIAL_BINS for pixels beyond the inscribed circle),
    bin populations, and the centre-disc / outer-ring selections."""
    half = min(h, w) / 2.0
    rows = (np.arange(h) - (h - 1) / 2.0) ** 2
    cols = (np.arange(w) - (w - 1) / 2.0) ** 2
    radius = np.sqrt(rows[:, None] + cols[None, :]).ravel()
    bin_idx = np.minimum(np.floor(radius / half * RADIAL_BINS).astype(np.int64), RADIAL_BINS)
    counts = np.bincount(bin_idx, minlength=RADIAL_BINS + 1)[:RADIAL_BINS]
    centre = np.flatnonzero(radius <= 0.25 * half)
    outer = np.flatnonzero(radius > 0.75 * half)
    for a in (bin_idx, counts, centre, outer):
        a.flags.writeable = False
    return bin_idx, counts, centre, outer


def spatial_features(gray: GrayImage) -> dict[str, float]:
    """Radial profile, centre/periphery contrast and half-plane asymmetries."""
    y = gray.values
    h, w = y.shape
    if min(h, w) < 16:
        raise TooSmallError("spatial features need min(width, height) >= 16")
    bin_idx, counts, centre, outer = _radial_geometry(h, w)
    flat = y.ravel()
    sums = np.bincount(bin_idx, weights=flat, minlength=RADIAL_BINS + 1)[:RADIAL_BINS]
    occupied = counts > 0
    profile = sums[occupied] / counts[occupied]
    index = np.flatnonzero(occupied).astype(np.float64)
    if profile.size >= 2:
        dx = index - index.mean()
        slope = float(np.dot(dx, profile - profile.mean()) / np.dot(dx, dx))
    else:
        slope = 0.0

    centre_mean = _safe_mean(flat[centre])
    outer_mean = _safe_mean(flat[outer])

    hh, hw = h // 2, w // 2
    top, bottom = y[:hh].mean(), y[h - hh :].mean()
    left, right = y[:, :hw].mean(), y[:, w - hw :].mean()
    quadrants = np.array([
        y[:hh, :hw].mean(),
        y[:hh, w - hw :].mean(),
        y[h - hh :, :hw].mean(),
        y[h - hh :, w - hw :].mean(),
    ])
    return {
        "radial_slope_mean": slope,
        "radial_profile_var": float(profile.var()),
        "center_mean": centre_mean,
        "outer_ring_mean": outer_mean,
        "center_minus_outer": centre_mean - outer_mean,
        "hemisphere_asymmetry_tb": float(abs(top - bottom) / (top + bottom + ASYMMETRY_EPS)),
        "hemisphere_asymmetry_lr": float(abs(left - right) / (left + right + ASYMMETRY_EPS)),
        "quadrant_mean_var": float(quadrants.var()),
    }


def global_features(
    img: RasterImage,
    gray: GrayImage,
    dark_threshold: float = DARK_THRESHOLD,
    black_threshold: float = BLACK_THRESHOLD,
) -> dict[str, float]:
    y = gray.values
    h, w = y.shape
    if img.channels == 3:
        r, g, b = img.pixels[:, :, 0], img.pixels[:, :, 1], img.pixels[:, :, 2]
        spread = np.maximum(np.maximum(r, g), b) - np.minimum(np.minimum(r, g), b)
        is_rgb = np.count_nonzero(spread > RGB_SPREAD) >= RGB_MIN_FRACTION * spread.size
    else:
        is_rgb = False
    ph = max(1, int(CORNER_FRACTION * h))
    pw = max(1, int(CORNER_FRACTION * w))
    corners = (y[:ph, :pw], y[:ph, w - pw :], y[h - ph :, :pw], y[h - ph :, w - pw :])
    return {
        "is_rgb": float(is_rgb),
        "black_pixel_ratio": float(np.count_nonzero(y < black_threshold) / y.size),
        "all_corners_dark_flag": float(all(c.mean() < dark_threshold for c in corners)),
        "aspect_ratio": w / h,
    }
