"""Core differentiable ops: matmul, softmax, cross-entropy.

Each public op takes tensors, returns a tensor, and attaches a ``vjp``
that accumulates into the inputs' ``grad`` buffers. The ``*_nd`` helpers
work on raw arrays and are shared with the layer classes.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateBatchError, DimensionError, ParameterError
from .tensor import Tensor


def softmax_nd(x: np.ndarray, axis: int) -> np.ndarray:
    """Max-shifted softmax along ``axis``."""
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def softmax_vjp_nd(y: np.ndarray, dout: np.ndarray, axis: int) -> np.ndarray:
    """Backward of softmax given its output ``y``."""
    inner = np.sum(dout * y, axis=axis, keepdims=True)
    return y * (dout - inner)


def relu_nd(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_vjp_nd(x: np.ndarray, dout: np.ndarray) -> np.ndarray:
    return np.where(x > 0.0, dout, 0.0)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}")
    out = Tensor(a.data @ b.data, check=False)

    def vjp(dout: np.ndarray) -> None:
        a.add_grad(dout @ b.data.T)
        b.add_grad(a.data.T @ dout)

    out.vjp = vjp
    return out


def softmax(x: Tensor, axis: int) -> Tensor:
    ndim = x.data.ndim
    if not -ndim <= axis < ndim:
        raise DimensionError(f"axis {axis} invalid for shape {x.shape}")
    if x.data.shape[axis] == 0:
        raise DimensionError(f"softmax over empty axis {axis} of shape {x.shape}")
    y = softmax_nd(x.data, axis)
    out = Tensor(y, check=False)

    def vjp(dout: np.ndarray) -> None:
        x.add_grad(softmax_vjp_nd(y, dout, axis))

    out.vjp = vjp
    return out


def cross_entropy(logits: Tensor, labels, ignore: int | None = None) -> Tensor:
    """Mean negative log-softmax probability of the true class.

    ``labels`` is an integer vector; entries equal to ``ignore`` do not
    contribute. Raises if every entry is ignored.
    """
    if logits.data.ndim != 2:
        raise DimensionError(f"expected (N, classes) logits, got {logits.shape}")
    labels = np.asarray(labels, dtype=np.int64)
    n, num_classes = logits.shape
    if labels.shape != (n,):
        raise DimensionError(f"labels shape {labels.shape} does not match {n} rows")
    active = np.ones(n, dtype=bool) if ignore is None else labels != ignore
    if not active.any():
        raise DegenerateBatchError("all entries ignored in cross-entropy batch")
    kept = labels[active]
    if kept.min() < 0 or kept.max() >= num_classes:
        raise ParameterError(
            f"label outside [0, {num_classes}) and not equal to ignore index"
        )

    shifted = logits.data - np.max(logits.data, axis=1, keepdims=True)
    log_z = np.log(np.sum(np.exp(shifted), axis=1))
    log_probs = shifted - log_z[:, None]
    count = int(active.sum())
    loss = -float(np.sum(log_probs[active, kept])) / count
    out = Tensor(np.asarray(loss))

    def vjp(dout: np.ndarray) -> None:
        scale = float(dout) / count
        dlogits = np.exp(log_probs)
        dlogits[np.arange(n)[active], kept] -= 1.0
        dlogits[~active] = 0.0
        logits.add_grad(dlogits * scale)

    out.vjp = vjp
    return out
