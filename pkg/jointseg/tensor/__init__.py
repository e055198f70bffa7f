"""Minimal tensor library with reverse-mode autodiff."""

from . import functional
from .autograd import Function, Tensor, as_tensor, float64, no_grad
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .nn import Module, Parameter, Profile

__all__ = [
    "Checkpoint",
    "Function",
    "Module",
    "Parameter",
    "Profile",
    "Tensor",
    "as_tensor",
    "float64",
    "functional",
    "load_checkpoint",
    "no_grad",
    "save_checkpoint",
]
