"""Minimal neural-network substrate with exact forward/backward contracts."""

from .layers import (
    Activation,
    BatchNorm,
    Conv3d,
    Dense,
    Dropout,
    EdgeToNode,
    Flatten,
    Layer,
    MaxPool3d,
    NodeToGraph,
    layer_from_spec,
)
from .losses import bce, bce_with_logits, loss, mse
from .network import Network, load_network, network_from_specs, save_network
from .optim import Adam, SgdMomentum, SwaAverager, make_optimizer

__all__ = [
    "Activation", "Adam", "BatchNorm", "Conv3d", "Dense", "Dropout",
    "EdgeToNode", "Flatten", "Layer", "MaxPool3d", "Network", "NodeToGraph",
    "SgdMomentum", "SwaAverager", "bce", "bce_with_logits", "layer_from_spec",
    "load_network", "loss", "make_optimizer", "mse", "network_from_specs",
    "save_network",
]
