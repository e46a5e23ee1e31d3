"""The 39-value feature vector: schema, assembly and CSV export."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from oodgate.errors import SchemaMismatchError
from oodgate.features.mask import extract_mask
from oodgate.features.shape import SHAPE_NAMES, shape_features
from oodgate.features.statistics import (
    BLACK_THRESHOLD,
    DARK_THRESHOLD,
    color_features,
    global_features,
    intensity_background_features,
    spatial_features,
)
from oodgate.features.texture import compute_glcm, compute_lbp, glcm_features, lbp_features
from oodgate.imaging import RasterImage, downsample, to_grayscale, to_hsv

SCHEMA_VERSION = 1

INTENSITY_NAMES = (
    "gray_min", "gray_max", "gray_mean", "gray_var", "gray_p05", "gray_p95", "background_dark_flag",
)
COLOR_TEXTURE_NAMES = (
    "hue_mean", "hue_var", "sat_mean", "sat_var", "val_mean", "val_var",
    "glcm_contrast", "glcm_homogeneity", "glcm_energy", "glcm_correlation",
    "lbp_mean", "lbp_var",
)
SPATIAL_NAMES = (
    "radial_slope_mean", "radial_profile_var", "center_mean", "outer_ring_mean",
    "center_minus_outer", "hemisphere_asymmetry_tb", "hemisphere_asymmetry_lr", "quadrant_mean_var",
)
GLOBAL_NAMES = ("is_rgb", "black_pixel_ratio", "all_corners_dark_flag", "aspect_ratio")

FEATURE_NAMES: tuple[str, ...] = INTENSITY_NAMES + COLOR_TEXTURE_NAMES + SPATIAL_NAMES + SHAPE_NAMES + GLOBAL_NAMES
N_FEATURES = len(FEATURE_NAMES)

FLAG_FEATURES = frozenset({"background_dark_flag", "is_rgb", "all_corners_dark_flag"})
RATIO_FEATURES = frozenset({
    "hue_var", "sat_mean", "val_mean", "glcm_homogeneity", "glcm_energy",
    "hemisphere_asymmetry_tb", "hemisphere_asymmetry_lr",
    "solidity", "extent", "mask_area_ratio", "boundary_smoothness", "black_pixel_ratio",
})


@dataclass(frozen=True)
class FeatureParams:
    """Tunable constants of the extractors (dark/black luminance cut-offs)."""

    dark_threshold: float = DARK_THRESHOLD
    black_threshold: float = BLACK_THRESHOLD


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    names: tuple[str, ...] = field(default=FEATURE_NAMES)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if len(self.values) != len(self.names) or len(self.names) != N_FEATURES:
            raise SchemaMismatchError(f"feature vector must have {N_FEATURES} values, got {len(self.values)}")

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values.tolist()))

    @classmethod
    def from_parts(cls, parts: dict[str, float]) -> FeatureVector:
        values = np.array([parts[n] for n in FEATURE_NAMES], dtype=np.float64)
        return cls(values)


def extract_feature_vector(img: RasterImage, factor: int = 1, params: FeatureParams | None = None) -> FeatureVector:
    """Downsample ``img`` by ``factor`` and compute all 39 features.

    Raises ``TooSmallError`` when the downsampled image is below 16 pixels on
    its short side.
    """
    params = params or FeatureParams()
    small = downsample(img, factor)
    gray = to_grayscale(small)
    hsv = to_hsv(small) if small.channels == 3 else None
    parts: dict[str, float] = {}
    parts.update(intensity_background_features(gray, params.dark_threshold))
    parts.update(color_features(hsv, small, gray))
    parts.update(glcm_features(compute_glcm(gray)))
    parts.update(lbp_features(compute_lbp(gray)))
    parts.update(spatial_features(gray))
    parts.update(shape_features(extract_mask(gray)))
    parts.update(global_features(small, gray, params.dark_threshold, params.black_threshold))
    for name, v in parts.items():
        if not math.isfinite(v):
            parts[name] = 0.0
    return FeatureVector.from_parts(parts)


def write_feature_csv(path, rows) -> None:
    """Write ``(image_path, label, FeatureVector)`` rows with a schema header."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "label", *FEATURE_NAMES])
        for image_path, label, fv in rows:
            writer.writerow([image_path, int(label), *(repr(float(v)) for v in fv.values)])


def read_feature_csv(path) -> list[tuple[str, int, FeatureVector]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header[2:]) != FEATURE_NAMES:
            raise SchemaMismatchError("feature CSV header does not match the feature schema")
        return [
            (row[0], int(row[1]), FeatureVector(np.array([float(v) for v in row[2:]])))
            for row in reader
        ]
