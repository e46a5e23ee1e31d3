"""Hand-crafted fundus-screening features in five categories."""

from oodgate.features.mask import BinaryMask, extract_mask
from oodgate.features.shape import CircleFit, convex_hull, fit_circle, shape_features
from oodgate.features.statistics import (
    _radial_geometry,
    color_features,
    global_features,
    intensity_background_features,
    spatial_features,
)
from oodgate.features.texture import Glcm, LbpHistogram, compute_glcm, compute_lbp, glcm_features, lbp_features
from oodgate.features.vector import (
    FEATURE_NAMES,
    FLAG_FEATURES,
    N_FEATURES,
    RATIO_FEATURES,
    SCHEMA_VERSION,
    FeatureParams,
    FeatureVector,
    extract_feature_vector,
    read_feature_csv,
    write_feature_csv,
)



def clear_caches() -> None:
    """Drop memoized per-image-size geometry (used to measure cold-start extraction)."""
    _radial_geometry.cache_clear()


__all__ = [
    "clear_caches",
    "FEATURE_NAMES", "FLAG_FEATURES", "N_FEATURES", "RATIO_FEATURES", "SCHEMA_VERSION",
    "BinaryMask", "CircleFit", "FeatureParams", "FeatureVector", "Glcm", "LbpHistogram",
    "color_features", "compute_glcm", "compute_lbp", "convex_hull", "extract_feature_vector",
    "extract_mask", "fit_circle", "glcm_features", "global_features",
    "intensity_background_features", "lbp_features", "read_feature_csv", "shape_features",
    "spatial_features", "write_feature_csv",
]
