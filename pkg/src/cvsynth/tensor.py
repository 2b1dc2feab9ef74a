"""Dense float64 tensors with explicit gradient buffers.

There is no autodiff graph: every op hand-writes its backward pass. Ops
attach a ``vjp`` callable to their output tensor which, given an upstream
cotangent array, accumulates gradients into the tensors the op consumed.
Composite blocks (attention, the full model) chain their children's
backward passes explicitly.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, ParameterError


class Tensor:
    """Row-major float64 array plus an optional same-shape gradient buffer."""

    __slots__ = ("data", "grad", "vjp")

    def __init__(self, data, copy: bool = False, check: bool = True):
        arr = np.asarray(data, dtype=np.float64)
        if copy:
            arr = arr.copy(order="C")
        elif not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        if check and not np.all(np.isfinite(arr)):
            raise ParameterError("tensor holds non-finite values")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.vjp = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        else:
            self.grad.fill(0.0)

    def add_grad(self, delta: np.ndarray) -> None:
        """Accumulate a cotangent; allocates the buffer on first use."""
        if delta.shape != self.data.shape:
            raise DimensionError(
                f"gradient shape {delta.shape} does not match tensor shape {self.data.shape}"
            )
        if self.grad is None:
            self.grad = np.array(delta, dtype=np.float64, copy=True)
        else:
            self.grad += delta

    def copy(self) -> "Tensor":
        return Tensor(self.data, copy=True, check=False)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape})"


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)
