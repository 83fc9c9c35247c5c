"""Approximate best ultrametric fits of Euclidean point sets."""

from .dataset import (
    DistanceScale,
    PointSet,
    dedupe,
    distance,
    estimate_scale_range,
    generate_uniform,
    jl_project,
    load_csv,
    save_csv,
    standardize,
)
from .dendro import (
    Dendrogram,
    DistortionReport,
    FitParams,
    FitResult,
    cartesian_tree,
    distortion,
    exact_best_fit,
    exact_fit,
    fast_ultrametric,
    fit,
    ultrametric_distance,
)
from .errors import (
    DatasetError,
    Disconnected,
    DuplicatePoints,
    InvalidTree,
    SelfMerge,
    StaleHandle,
    UltrafitError,
)

__version__ = "0.1.0"
