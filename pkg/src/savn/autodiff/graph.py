"""Declared expression graphs evaluated against leaf bindings."""
from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .core import Tensor, detect_non_finite
from .params import ParamVector


class ExprGraph:
    """An expression built by ``build(**leaves)`` over named, shaped leaves.

    The graph is re-traced on each :func:`forward`, which keeps evaluation
    with identical bindings bit-identical and lets the same definition serve
    both values and gradients.
    """

    def __init__(self, build: Callable[..., Tensor], leaf_shapes: Mapping[str, tuple]):
        self.build = build
        self.leaf_shapes = {k: tuple(v) for k, v in leaf_shapes.items()}

    def bind(self, leaves: Mapping, requires_grad: bool = True) -> dict:
        missing = set(self.leaf_shapes) - set(leaves)
        if missing:
            raise ValueError(f"unbound leaves: {sorted(missing)}")
        bound = {}
        for name, shape in self.leaf_shapes.items():
            value = leaves[name]
            if isinstance(value, ParamVector):
                value = value.values
            if isinstance(value, Tensor):
                t = value
            else:
                t = Tensor(np.array(value, dtype=np.float64), requires_grad=requires_grad)
            if t.data.shape != shape:
                raise ValueError(f"leaf '{name}': expected shape {shape}, got {t.data.shape}")
            bound[name] = t
        return bound


def forward(graph: ExprGraph, leaves: Mapping, requires_grad: bool = True) -> tuple[Tensor, dict]:
    """Evaluate the graph; returns the root and the bound leaf tensors.

    Raises :class:`~savn.autodiff.core.NonFiniteError` naming the first op that
    produced a NaN or Inf.
    """
    bound = graph.bind(leaves, requires_grad=requires_grad)
    with detect_non_finite():
        root = graph.build(**bound)
    return root, bound
