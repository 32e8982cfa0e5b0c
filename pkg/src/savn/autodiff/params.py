"""Flat parameter storage with named slices."""
from __future__ import annotations

from typing import Mapping

import numpy as np

from .core import Tensor
from .ops import take


class ParamVector:
    """A flat float64 array partitioned into named, shaped slices.

    Instances are immutable: :meth:`replace` returns a new vector. Use
    :meth:`leaf` to get a differentiable tensor and :meth:`unpack` to view any
    flat tensor of the same size (e.g. adapted parameters) slice by slice.
    """

    def __init__(self, shapes: Mapping[str, tuple], values=None):
        slices = {}
        offset = 0
        for name, shape in shapes.items():
            shape = tuple(int(s) for s in shape)
            n = int(np.prod(shape))
            slices[name] = (offset, shape)
            offset += n
        self.slices = slices
        self.size = offset
        if values is None:
            values = np.zeros(offset)
        values = np.array(values, dtype=np.float64).reshape(-1)
        if values.size != offset:
            raise ValueError(f"expected {offset} values, got {values.size}")
        values.flags.writeable = False
        self.values = values

    @property
    def shapes(self) -> dict:
        return {name: shape for name, (_, shape) in self.slices.items()}

    def names(self):
        return list(self.slices)

    def get(self, name: str) -> np.ndarray:
        offset, shape = self.slices[name]
        return self.values[offset : offset + int(np.prod(shape))].reshape(shape)

    def replace(self, values) -> "ParamVector":
        return ParamVector(self.shapes, values)

    def with_slice(self, name: str, value) -> "ParamVector":
        offset, shape = self.slices[name]
        value = np.asarray(value, dtype=np.float64)
        if value.shape != shape:
            raise ValueError(f"slice {name}: expected shape {shape}, got {value.shape}")
        new = self.values.copy()
        new[offset : offset + value.size] = value.reshape(-1)
        return self.replace(new)

    def leaf(self, requires_grad: bool = True) -> Tensor:
        return Tensor(self.values.copy(), requires_grad=requires_grad)

    def unpack(self, flat: Tensor) -> dict:
        if flat.data.shape != (self.size,):
            raise ValueError(f"unpack: expected flat size {self.size}, got {flat.data.shape}")
        out = {}
        for name, (offset, shape) in self.slices.items():
            out[name] = take(flat, offset, offset + int(np.prod(shape)), shape)
        return out

    def __eq__(self, other):
        if not isinstance(other, ParamVector):
            return NotImplemented
        return self.slices == other.slices and self.values.tobytes() == other.values.tobytes()

    def __repr__(self):
        return f"ParamVector({len(self.slices)} slices, size={self.size})"
