"""Hierarchical multi-label node classification with true-path consistent predictions."""
import logging

from .errors import (
    HmcError,
    NetworkError,
    HierarchyError,
    AnnotationError,
    ResampleError,
    LearnError,
    EngineError,
)
from .network import Network, NodeFeatureTable, load_network, topological_features, neighborhood_class_ratio
from .hierarchy import (
    AnnotationMap,
    ClassCensus,
    Hierarchy,
    SubHierarchy,
    TreeHierarchy,
    class_census,
    close_annotations,
    descendant_counts,
    edge_weight,
    normalize,
    split_subhierarchies,
)

__version__ = "0.1.0"

__all__ = [
    "HmcError", "NetworkError", "HierarchyError", "AnnotationError", "ResampleError", "LearnError", "EngineError",
    "Network", "NodeFeatureTable", "load_network", "topological_features", "neighborhood_class_ratio",
    "AnnotationMap", "ClassCensus", "Hierarchy", "SubHierarchy", "TreeHierarchy", "class_census",
    "close_annotations", "descendant_counts", "edge_weight", "normalize", "split_subhierarchies",
]

logging.getLogger(__name__).addHandler(logging.NullHandler())
