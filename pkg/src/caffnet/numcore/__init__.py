"""Minimal differentiable numeric core."""
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .complex import (
    ComplexTensor,
    complex_batchnorm1d,
    complex_conv1d,
    complex_leaky_relu,
    decompose,
    from_polar,
    tanh_bound,
)
from .functional import (
    BatchNormState,
    ShapeError,
    atan2,
    batchnorm1d,
    clamp_min,
    concat,
    conv1d,
    hypot,
    leaky_relu,
    relu,
    row_softmax,
    sigmoid,
    softmax,
    stack,
    tanh,
)
from .gradcheck import check_gradients, numeric_gradient
from .optim import Adam, ReduceLROnPlateau, adam_step, plateau_update
from .tensor import Tensor, as_tensor, backward, parameter

__all__ = [
    "Adam",
    "BatchNormState",
    "CheckpointError",
    "ComplexTensor",
    "ReduceLROnPlateau",
    "ShapeError",
    "Tensor",
    "adam_step",
    "as_tensor",
    "atan2",
    "backward",
    "batchnorm1d",
    "check_gradients",
    "clamp_min",
    "complex_batchnorm1d",
    "complex_conv1d",
    "complex_leaky_relu",
    "concat",
    "conv1d",
    "decompose",
    "from_polar",
    "hypot",
    "leaky_relu",
    "load_checkpoint",
    "numeric_gradient",
    "parameter",
    "plateau_update",
    "relu",
    "row_softmax",
    "save_checkpoint",
    "sigmoid",
    "softmax",
    "stack",
    "tanh",
    "tanh_bound",
]
