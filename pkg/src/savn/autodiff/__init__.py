"""Reverse-mode autodiff with second-order support."""
from . import ops
from .core import (
    GraphError,
    NonFiniteError,
    Tensor,
    as_tensor,
    detect_non_finite,
    grad,
    grad_arrays,
    grad_mode,
    is_grad_enabled,
    no_grad,
    tensor,
)
from .graph import ExprGraph, forward
from .meta import first_order_grad_through_update, grad_through_update, sgd_step
from .params import ParamVector

__all__ = [
    "ExprGraph",
    "GraphError",
    "NonFiniteError",
    "ParamVector",
    "Tensor",
    "as_tensor",
    "detect_non_finite",
    "first_order_grad_through_update",
    "forward",
    "grad",
    "grad_arrays",
    "grad_mode",
    "grad_through_update",
    "is_grad_enabled",
    "no_grad",
    "ops",
    "sgd_step",
    "tensor",
]
