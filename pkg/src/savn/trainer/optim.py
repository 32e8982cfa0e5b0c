"""Adam and the parameter store shared by training workers."""
from __future__ import annotations

import threading

import numpy as np

from ..autodiff import ParamVector


class Adam:
    def __init__(self, size: int, lr: float, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, values: np.ndarray, g: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * g
        self.v = self.b2 * self.v + (1 - self.b2) * g * g
        m_hat = self.m / (1 - self.b1**self.t)
        v_hat = self.v / (1 - self.b2**self.t)
        return values - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class SharedParamStore:
    """Current theta/phi plus optimizer state; updates are atomic under a lock."""

    def __init__(self, theta: ParamVector, phi: ParamVector | None, beta1: float, beta2: float):
        self._lock = threading.Lock()
        self.theta = theta
        self.phi = phi
        self.opt_theta = Adam(theta.size, beta1)
        self.opt_phi = Adam(phi.size, beta2) if phi is not None else None
        self.version = 0

    def snapshot(self) -> tuple:
        with self._lock:
            return self.theta, self.phi, self.version

    def apply(self, g_theta: np.ndarray, g_phi: np.ndarray | None) -> int:
        """Apply one batch gradient; returns the new version."""
        with self._lock:
            self.theta = self.theta.replace(self.opt_theta.step(self.theta.values, g_theta))
            if self.phi is not None and g_phi is not None:
                self.phi = self.phi.replace(self.opt_phi.step(self.phi.values, g_phi))
            self.version += 1
            return self.version
