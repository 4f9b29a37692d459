"""Exception hierarchy shared across the toolchain."""


class SnnDeployError(Exception):
    """Base class for all toolchain errors."""


class GraphError(SnnDeployError):
    """Structural problem in a graph (bad topology, bad node parameters)."""


class ShapeError(GraphError):
    """Tensor shapes disagree along an edge or become non-positive."""


class QuantizationError(SnnDeployError):
    """Quantization pass cannot proceed (e.g. all-zero weights, missing record)."""


class LoweringError(SnnDeployError):
    """Graph cannot be lowered to populations/projections."""


class PartitionError(SnnDeployError):
    """Network does not fit the processing-element model."""


class SimulationError(SnnDeployError):
    """Inconsistent network/placement/input handed to an engine."""
