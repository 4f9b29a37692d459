"""Deployment toolchain and chip-scale simulator for spiking neural networks
on many-core neuromorphic hardware.

Pipeline: graph IR -> quantization (PTQ/QAT with threshold co-scaling) ->
lowering to populations/projections -> memory-constrained partitioning ->
timestep simulation with int8 synapse weights and one-step spike delay.
"""

from . import binio, events, fixtures, ir, lowering, network, partition, quantize, sim
from .errors import (
    GraphError,
    LoweringError,
    PartitionError,
    QuantizationError,
    ShapeError,
    SimulationError,
    SnnDeployError,
)

__version__ = "0.1.0"
