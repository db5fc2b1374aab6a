"""Autodiff engine, network layers and training utilities."""

from .autodiff import Tensor, backward, masked_softmax
from .checkpoint import load_checkpoint, save_checkpoint
from .features import node_features, window_moments
from .layers import (
    DenseReadout,
    GatLayer,
    GcnLayer,
    LstmCell,
    NodeReadout,
    gat_forward,
    gcn_forward,
    glorot_uniform,
    lstm_forward,
    readout,
)
from .models import (
    SpatialTemporalModel,
    TemporalOnlyModel,
    mse_loss,
    set_parameters,
    snapshot_parameters,
)
from .optim import Adam

__all__ = [
    "Adam",
    "DenseReadout",
    "GatLayer",
    "GcnLayer",
    "LstmCell",
    "NodeReadout",
    "SpatialTemporalModel",
    "TemporalOnlyModel",
    "Tensor",
    "backward",
    "gat_forward",
    "gcn_forward",
    "glorot_uniform",
    "load_checkpoint",
    "lstm_forward",
    "masked_softmax",
    "mse_loss",
    "node_features",
    "readout",
    "save_checkpoint",
    "set_parameters",
    "snapshot_parameters",
    "window_moments",
]
