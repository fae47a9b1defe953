from . import tensor as ops
from .layers import MLP, LayerNorm, Linear, Module, glorot, rng
from .optim import Adam, CosineSchedule, Optimizer, SGDNesterov
from .tensor import NumericError, Tensor, tensor

__all__ = [
    "Adam", "CosineSchedule", "LayerNorm", "Linear", "MLP", "Module", "NumericError",
    "Optimizer", "SGDNesterov", "Tensor", "glorot", "ops", "rng", "tensor",
]
