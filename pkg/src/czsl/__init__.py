"""Compositional zero-shot learning with graph-embedded composition classifiers."""

__version__ = "0.1.0"

from .data import Dataset, Pair, Sample, SplitSpec, load_features, load_splits, validate_splits
from .errors import CzslError
from .graph import CompGraph, GraphVariant, PropagationMatrix, build_graph, normalize

__all__ = [
    "CompGraph",
    "CzslError",
    "Dataset",
    "GraphVariant",
    "Pair",
    "PropagationMatrix",
    "Sample",
    "SplitSpec",
    "build_graph",
    "load_features",
    "load_splits",
    "normalize",
    "validate_splits",
    "__version__",
]
