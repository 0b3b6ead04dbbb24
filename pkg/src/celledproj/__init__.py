"""Celled projection and comparison features for binary character images."""

from celledproj.errors import CelledProjError
from celledproj.imagecore import BinaryImage, GrayImage, LabeledDataset
from celledproj.features import BitFeatureVector, RealFeatureVector, celled_projection

__all__ = [
    "BinaryImage",
    "BitFeatureVector",
    "CelledProjError",
    "GrayImage",
    "LabeledDataset",
    "RealFeatureVector",
    "celled_projection",
]

__version__ = "0.1.0"
