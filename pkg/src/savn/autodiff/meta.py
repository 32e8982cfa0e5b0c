"""Differentiating an outer loss through inner SGD steps."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .core import Tensor, grad
from .ops import scale, sub
from .params import ParamVector

MAX_CHAINED_UPDATES = 4


def sgd_step(theta: Tensor, loss: Tensor, alpha: float, first_order: bool = False) -> Tensor:
    """``theta - alpha * d loss / d theta`` as a graph node.

    Exact mode keeps the inner gradient differentiable (second-order terms
    flow back through it); first-order mode treats it as a constant. A zero
    step size returns ``theta`` itself.
    """
    if alpha == 0:
        return theta
    (g,) = grad(loss, [theta], create_graph=not first_order, allow_unused=True)
    if g.data.shape != theta.data.shape:
        raise ValueError(f"inner gradient shape {g.data.shape} != parameter shape {theta.data.shape}")
    return sub(theta, scale(g, alpha))


def _as_array(p) -> np.ndarray:
    if isinstance(p, ParamVector):
        return p.values
    if isinstance(p, Tensor):
        return p.data
    return np.asarray(p, dtype=np.float64)


def grad_through_update(
    theta,
    alpha: float,
    inner_loss: Callable[..., Tensor],
    outer_loss: Callable[..., Tensor],
    steps: int = 1,
    extras: Sequence = (),
    first_order: bool = False,
) -> tuple:
    """Total derivative of ``outer_loss(adapted, *extras)`` where
    ``adapted`` comes from ``steps`` SGD updates on ``inner_loss(., *extras)``.

    Returns numpy gradients ``(d/d theta, *d/d extras)``.
    """
    if not 0 <= steps <= MAX_CHAINED_UPDATES:
        raise ValueError(f"steps must be in [0, {MAX_CHAINED_UPDATES}], got {steps}")
    theta_t = Tensor(_as_array(theta).copy(), requires_grad=True)
    extra_t = [Tensor(_as_array(e).copy(), requires_grad=True) for e in extras]
    adapted = theta_t
    for _ in range(steps):
        adapted = sgd_step(adapted, inner_loss(adapted, *extra_t), alpha, first_order)
    out = outer_loss(adapted, *extra_t)
    grads = grad(out, [theta_t, *extra_t], allow_unused=True)
    return tuple(g.data for g in grads)


def first_order_grad_through_update(theta, alpha, inner_loss, outer_loss, steps=1, extras=()):
    """As :func:`grad_through_update` with the inner gradients held constant."""
    return grad_through_update(
        theta, alpha, inner_loss, outer_loss, steps=steps, extras=extras, first_order=True
    )
