"""Tensor node type and the reverse-mode engine.

A :class:`Tensor` holds a float64 array plus, when it was produced from inputs
that require gradients, its parents and a vector-Jacobian function. VJPs are
written with the differentiable ops in :mod:`savn.autodiff.ops`, so running
:func:`grad` with ``create_graph=True`` returns gradients that are graph nodes
themselves and can be differentiated again.
"""
from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np


class GraphError(ValueError):
    """Malformed differentiation request (non-scalar root, unreachable leaf...)."""


class NonFiniteError(FloatingPointError):
    """An intermediate value became NaN or infinite."""


class _Mode(threading.local):
    grad_enabled = True
    check_finite = False


_mode = _Mode()


def is_grad_enabled() -> bool:
    return _mode.grad_enabled


@contextmanager
def grad_mode(enabled: bool):
    prev = _mode.grad_enabled
    _mode.grad_enabled = enabled
    try:
        yield
    finally:
        _mode.grad_enabled = prev


def no_grad():
    return grad_mode(False)


@contextmanager
def detect_non_finite(enabled: bool = True):
    """Raise :class:`NonFiniteError` at the first op producing NaN/Inf."""
    prev = _mode.check_finite
    _mode.check_finite = enabled
    try:
        yield
    finally:
        _mode.check_finite = prev


class Tensor:
    __slots__ = ("data", "parents", "vjp", "requires_grad", "op", "__weakref__")

    def __init__(self, data, parents=(), vjp=None, op="leaf", requires_grad=False):
        self.data = data
        self.parents = parents
        self.vjp = vjp
        self.op = op
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        flag = ", requires_grad" if self.requires_grad else ""
        return f"Tensor(op={self.op}, shape={self.data.shape}{flag})"

    __hash__ = object.__hash__


def tensor(values, requires_grad: bool = False) -> Tensor:
    """Make a leaf tensor (copies the input)."""
    return Tensor(np.array(values, dtype=np.float64), requires_grad=requires_grad)


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def make_node(data: np.ndarray, parents: tuple, vjp: Callable, op: str) -> Tensor:
    """Wrap an op result; records the graph edge only when it is needed."""
    if _mode.check_finite and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite value produced by op '{op}'")
    if _mode.grad_enabled:
        for p in parents:
            if p.requires_grad:
                return Tensor(data, parents, vjp, op, True)
    return Tensor(data, (), None, op, False)


def _toposort(root: Tensor, input_ids: set) -> tuple[list, dict]:
    """Nodes between the root and the requested inputs, parents first."""
    order = []
    needed = {}
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        nid = id(node)
        if expanded:
            keep = nid in input_ids
            if not keep:
                for p in node.parents:
                    if needed.get(id(p), False):
                        keep = True
                        break
            needed[nid] = keep
            if keep:
                order.append(node)
            continue
        if nid in visited:
            continue
        visited.add(nid)
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    return order, needed


def grad(
    output: Tensor,
    inputs: Sequence[Tensor],
    create_graph: bool = False,
    allow_unused: bool = False,
) -> list:
    """Gradient of a scalar ``output`` with respect to each of ``inputs``.

    With ``create_graph=True`` the returned tensors are differentiable
    functions of the graph's leaves. Inputs the output does not depend on get
    zeros when ``allow_unused`` is set and raise :class:`GraphError` otherwise.
    """
    if output.data.size != 1:
        raise GraphError(f"grad needs a scalar root, got shape {output.data.shape}")
    inputs = list(inputs)
    input_ids = {id(t) for t in inputs if t.requires_grad}
    results = {}
    if output.requires_grad and input_ids:
        order, needed = _toposort(output, input_ids)
        grads = {id(output): Tensor(np.ones_like(output.data))}
        with grad_mode(create_graph):
            for node in reversed(order):
                nid = id(node)
                g = grads.pop(nid, None)
                if g is None:
                    continue
                if nid in input_ids:
                    results[nid] = g
                if not node.parents:
                    continue
                pgrads = node.vjp(g, node)
                for p, pg in zip(node.parents, pgrads):
                    if pg is None or not needed.get(id(p), False):
                        continue
                    prev = grads.get(id(p))
                    grads[id(p)] = pg if prev is None else _accumulate(prev, pg)
    out = []
    for t in inputs:
        g = results.get(id(t))
        if g is None:
            if not allow_unused:
                raise GraphError(f"input {t!r} is not part of the output's graph")
            g = Tensor(np.zeros_like(t.data))
        out.append(g)
    return out


def _accumulate(a: Tensor, b: Tensor) -> Tensor:
    from .ops import add

    return add(a, b)


def grad_arrays(output: Tensor, inputs: Sequence[Tensor], allow_unused: bool = True):
    """Plain numpy gradients (first order, no graph kept)."""
    return [g.data for g in grad(output, inputs, allow_unused=allow_unused)]
