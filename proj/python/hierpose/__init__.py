"""Hierarchical pose estimation: HOG, projection and the train/infer/eval pipeline."""

from ._core import (
    Error,
    evaluate,
    generate_synthetic,
    hog,
    infer,
    normalize_mesh,
    project_mesh,
    train,
)

__all__ = [
    "Error",
    "evaluate",
    "generate_synthetic",
    "hog",
    "infer",
    "normalize_mesh",
    "project_mesh",
    "train",
]
