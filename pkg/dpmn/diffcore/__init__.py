'''Reverse-mode differentiable arrays, Adam and gradient checking'''

from dpmn.diffcore.checkpoint import (
    CheckpointFormatError,
    MissingCheckpointError,
    read_checkpoint,
    write_checkpoint,
)
from dpmn.diffcore.gradcheck import GradcheckReport, gradcheck
from dpmn.diffcore.module import Module, Parameter, fan_in_uniform
from dpmn.diffcore.node import (
    DiffNode,
    NonFiniteError,
    NonScalarLossError,
    Precision,
    ShapeError,
    backward,
    constant,
    current_dtype,
    get_precision,
    precision,
    set_precision,
)
from dpmn.diffcore.optim import Adam, adam_step
from dpmn.diffcore.rng import Rng

__all__ = [
    "Adam",
    "CheckpointFormatError",
    "DiffNode",
    "GradcheckReport",
    "MissingCheckpointError",
    "Module",
    "NonFiniteError",
    "NonScalarLossError",
    "Parameter",
    "Precision",
    "Rng",
    "ShapeError",
    "adam_step",
    "backward",
    "constant",
    "current_dtype",
    "fan_in_uniform",
    "get_precision",
    "gradcheck",
    "precision",
    "read_checkpoint",
    "set_precision",
    "write_checkpoint",
]
