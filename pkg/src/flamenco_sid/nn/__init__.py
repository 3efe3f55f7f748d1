"""Small numpy autodiff kernel with the layers used by the singer-identification models."""

from . import functional
from .checkpoint import CheckpointError, load, save
from .layers import (BLSTM, ELU, GRU, BatchNorm2d, Conv2d, Dropout, Linear, MaxPool2d, Module, Parameter,
                     ReLU, Sequential)
from .optim import Adam, adam_step, init_state
from .rng import generator, manual_seed
from .tensor import ShapeError, Tensor, concat, no_grad

__all__ = [
    "Adam", "BLSTM", "BatchNorm2d", "CheckpointError", "Conv2d", "Dropout", "ELU", "GRU", "Linear",
    "MaxPool2d", "Module", "Parameter", "ReLU", "Sequential", "ShapeError", "Tensor", "adam_step", "concat",
    "functional", "generator", "init_state", "load", "manual_seed", "no_grad", "save",
]
