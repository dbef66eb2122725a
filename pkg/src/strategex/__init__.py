"""Geometry engine for strategic classification with non-linear classifiers."""

from .core import (
    SCHEMA,
    BallUnion,
    Classifier,
    CostModel,
    Dataset,
    GridSampled,
    LabelGrid,
    Linear,
    Norm,
    Polarity,
    Polynomial,
    Polytope,
    ScoreFn,
)

__all__ = [
    "SCHEMA",
    "BallUnion",
    "Classifier",
    "CostModel",
    "Dataset",
    "GridSampled",
    "LabelGrid",
    "Linear",
    "Norm",
    "Polarity",
    "Polynomial",
    "Polytope",
    "ScoreFn",
]
__version__ = "0.1.0"
