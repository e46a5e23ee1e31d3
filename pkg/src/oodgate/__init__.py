"""Fundus vs. non-fundus screening with hand-crafted features and ExtraTrees."""

from oodgate.features import FEATURE_NAMES, SCHEMA_VERSION, FeatureVector, extract_feature_vector
from oodgate.forest import ExtraTreesModel, predict_probability, train
from oodgate.imaging import RasterImage, decode_image, downsample

__all__ = [
    "FEATURE_NAMES",
    "SCHEMA_VERSION",
    "ExtraTreesModel",
    "FeatureVector",
    "RasterImage",
    "decode_image",
    "downsample",
    "extract_feature_vector",
    "predict_probability",
    "train",
]

__version__ = "0.1.0"
