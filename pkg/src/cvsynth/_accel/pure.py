"""Numpy reference implementation of the offset-contraction kernels.

The synthetic-view convolution reduces to

    out[p, :] = sum_o vol[p + o, :] @ weights[o]

over a set of integer offsets ``o`` (positions outside the volume read as
zero). These three functions are its forward pass and the two backward
contractions; the compiled extension implements the same contract.
"""

from __future__ import annotations

import numpy as np


def _ranges(offset: int, extent: int) -> tuple[int, int]:
    """Output index range for which ``index + offset`` stays in bounds."""
    lo = max(0, -offset)
    hi = extent - max(0, offset)
    return lo, hi


def _windows(offsets_row: np.ndarray, shape: tuple[int, int, int]):
    dst = []
    src = []
    for off, ext in zip(offsets_row, shape):
        lo, hi = _ranges(int(off), ext)
        if lo >= hi:
            return None
        dst.append(slice(lo, hi))
        src.append(slice(lo + int(off), hi + int(off)))
    return tuple(dst), tuple(src)


def offset_matmul_forward(vol: np.ndarray, offsets: np.ndarray, weights: np.ndarray) -> np.ndarray:
    h, w, d, c_in = vol.shape
    c_out = weights.shape[2]
    out = np.zeros((h, w, d, c_out), dtype=np.float64)
    for o in range(offsets.shape[0]):
        win = _windows(offsets[o], (h, w, d))
        if win is None:
            continue
        dst, src = win
        block = vol[src].reshape(-1, c_in) @ weights[o]
        out[dst] += block.reshape(out[dst].shape)
    return out


def offset_matmul_backward_data(dout: np.ndarray, offsets: np.ndarray, weights: np.ndarray) -> np.ndarray:
    h, w, d, c_out = dout.shape
    c_in = weights.shape[1]
    dvol = np.zeros((h, w, d, c_in), dtype=np.float64)
    for o in range(offsets.shape[0]):
        win = _windows(offsets[o], (h, w, d))
        if win is None:
            continue
        dst, src = win
        block = dout[dst].reshape(-1, c_out) @ weights[o].T
        dvol[src] += block.reshape(dvol[src].shape)
    return dvol


def offset_matmul_backward_weights(vol: np.ndarray, dout: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    h, w, d, c_in = vol.shape
    c_out = dout.shape[3]
    dweights = np.zeros((offsets.shape[0], c_in, c_out), dtype=np.float64)
    for o in range(offsets.shape[0]):
        win = _windows(offsets[o], (h, w, d))
        if win is None:
            continue
        dst, src = win
        dweights[o] = vol[src].reshape(-1, c_in).T @ dout[dst].reshape(-1, c_out)
    return dweights
