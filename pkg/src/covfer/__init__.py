"""Covariance-descriptor pipeline for 3D facial expression recognition.

Shallow geometric covariances from mesh patches and pooled covariances of
CNN feature tensors are reduced on the SPD manifold, quantized against
k-means codebooks, fused, and classified with a one-vs-one linear SVM.
"""

from . import bof, errors, formats, mesh, patches, pipeline, pooling, spd, svm, synthetic
from .errors import CovferError

__version__ = "0.1.0"

__all__ = [
    "bof",
    "errors",
    "formats",
    "mesh",
    "patches",
    "pipeline",
    "pooling",
    "spd",
    "svm",
    "synthetic",
    "CovferError",
    "__version__",
]
