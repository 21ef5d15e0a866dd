"""Truncated-Fock simulation and training of continuous-variable quantum neural networks."""
from .fock import (
    Beamsplitter,
    Displacement,
    FockState,
    Kerr,
    Rotation,
    Squeeze,
    apply_gate,
    fidelity,
    gate_matrix,
    project_normalize,
    quadrature_expectation,
)
from .layers import LayerParams, NetworkParams, layer_forward, network_forward
from .training import CostSpec, TrainConfig, finite_diff_gradient, optimizer_step, train

__version__ = "0.1.0"
