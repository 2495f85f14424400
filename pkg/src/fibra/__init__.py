"""Fibration symmetries of directed multigraphs and their use in neural networks."""

from importlib import resources

from .fibration import (
    BaseGraph,
    Coloring,
    InputTree,
    build_base,
    compression_factor,
    covering_partition,
    initial_coloring,
    input_tree,
    is_balanced,
    minimal_balanced_coloring,
    minimal_base,
    refine_step,
)
from .graph import DirectedMultigraph, Edge, GraphValidationError, build_graph
from .isotest import fibration_test, multigraph_isomorphic, wl_stable_partition, wl_test

__version__ = "0.1.0"


def example_path(name: str = "tricyclooctane.json"):
    """Path of a bundled example graph document."""
    return resources.files(__name__) / "data" / name


__all__ = [
    "BaseGraph",
    "Coloring",
    "DirectedMultigraph",
    "Edge",
    "GraphValidationError",
    "InputTree",
    "build_base",
    "build_graph",
    "compression_factor",
    "covering_partition",
    "example_path",
    "fibration_test",
    "initial_coloring",
    "input_tree",
    "is_balanced",
    "minimal_balanced_coloring",
    "minimal_base",
    "multigraph_isomorphic",
    "refine_step",
    "wl_stable_partition",
    "wl_test",
]
