"""Synthetic-view feature maps from rotated kernels.

A rotated kernel point lands at a fractional grid position, so its
contribution is trilinearly interpolated from the 8 corners of the unit
cube it falls in; corners outside the volume contribute zero. Because
every output vertex uses the same rotated point set, the fractional parts
are shared across the volume: each (kernel point, corner) pair collapses
to one integer offset with a constant weight. A view's convolution is
therefore a small set of shifted pointwise contractions, precomputed once
per rotated kernel as an :class:`InterpolationPlan`.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .errors import DimensionError, ParameterError
from .geometry import RotatedKernel, rotated_kernels
from .rng import SplitMix64
from .tensor import Tensor

ROLES = ("original", "synthetic", "augmented", "semantic", "geometric")


@dataclass
class FeatureVolume:
    """A 4-D feature map (H, W, D, C) with a role tag."""

    tensor: Tensor
    role: str = "original"

    def __post_init__(self):
        if self.tensor.data.ndim != 4:
            raise DimensionError(f"feature volume must be 4-D, got {self.tensor.shape}")
        if min(self.tensor.shape) < 1:
            raise DimensionError(f"feature volume extents must be >= 1, got {self.tensor.shape}")
        if self.role not in ROLES:
            raise ParameterError(f"unknown volume role {self.role!r}")

    @property
    def spatial_shape(self) -> tuple[int, int, int]:
        return self.tensor.shape[:3]

    @property
    def channels(self) -> int:
        return self.tensor.shape[3]


def neighbor_positions(center, kernel: RotatedKernel) -> np.ndarray:
    """Positions probed around ``center``: one per kernel point, possibly
    fractional and possibly outside the volume."""
    center = np.asarray(center, dtype=np.float64)
    if center.shape != (3,) or not np.all(np.isfinite(center)):
        raise ParameterError(f"center must be a finite 3-vector, got {center!r}")
    return center + kernel.points


def interpolate(volume: FeatureVolume, position) -> Tensor:
    """Trilinear feature lookup at a fractional position.

    Corner weight is the product over dimensions of ``1 - |corner - pos|``;
    corners outside the volume read as zero. At an interior integer
    position this returns the stored feature exactly. The vjp spreads the
    cotangent over the same corners with the same weights.
    """
    pos = np.asarray(position, dtype=np.float64)
    if pos.shape != (3,) or not np.all(np.isfinite(pos)):
        raise ParameterError(f"position must be a finite 3-vector, got {position!r}")
    data = volume.tensor.data
    shape = volume.spatial_shape
    base = np.floor(pos).astype(np.int64)
    frac = pos - base

    corners: list[tuple[tuple[int, int, int], float]] = []
    for delta in itertools.product((0, 1), repeat=3):
        weight = 1.0
        idx = []
        for d in range(3):
            weight *= frac[d] if delta[d] else 1.0 - frac[d]
            idx.append(int(base[d]) + delta[d])
        if weight == 0.0:
            continue
        if all(0 <= idx[d] < shape[d] for d in range(3)):
            corners.append((tuple(idx), weight))

    out_data = np.zeros(volume.channels, dtype=np.float64)
    for idx, weight in corners:
        out_data += weight * data[idx]
    out = Tensor(out_data, check=False)

    def vjp(dout: np.ndarray) -> None:
        dvol = np.zeros_like(data)
        for idx, weight in corners:
            dvol[idx] += weight * dout
        volume.tensor.add_grad(dvol)

    out.vjp = vjp
    return out


@dataclass(eq=False)
class InterpolationPlan:
    """Integer offsets and per-kernel-point corner weights for one view.

    ``basis[o, k]`` is the trilinear weight with which kernel point ``k``
    reads the voxel at ``offsets[o]`` relative to the output vertex.
    """

    offsets: np.ndarray       # (n_offsets, 3) int64
    basis: np.ndarray         # (n_offsets, K**3) float64

    @property
    def reach(self) -> np.ndarray:
        """Max |offset| per axis; outputs further than this from every
        border never see zero padding."""
        return np.max(np.abs(self.offsets), axis=0)


def build_plan(kernel: RotatedKernel) -> InterpolationPlan:
    n_points = len(kernel.points)
    table: dict[tuple[int, int, int], np.ndarray] = {}
    for k in range(n_points):
        base = np.floor(kernel.points[k]).astype(np.int64)
        frac = kernel.points[k] - base
        for delta in itertools.product((0, 1), repeat=3):
            weight = 1.0
            for d in range(3):
                weight *= frac[d] if delta[d] else 1.0 - frac[d]
            if weight == 0.0:
                continue
            key = (int(base[0] + delta[0]), int(base[1] + delta[1]), int(base[2] + delta[2]))
            row = table.get(key)
            if row is None:
                row = np.zeros(n_points, dtype=np.float64)
                table[key] = row
            row[k] += weight
    keys = sorted(table.keys())
    offsets = np.array(keys, dtype=np.int64).reshape(len(keys), 3)
    basis = np.stack([table[key] for key in keys], axis=0)
    return InterpolationPlan(offsets=offsets, basis=basis)


@dataclass(eq=False)
class SynthesisLayer:
    """Per-view rotated kernels with independent weight tensors.

    Weights have shape (K**3, C_in, C_out), one slice per kernel point.
    Padding is implicit: neighbor reads outside the volume are zero, and
    the output spatial shape equals the input shape (stride 1).
    """

    kernels: list[RotatedKernel]
    weights: list[Tensor]
    plans: list[InterpolationPlan] = field(default_factory=list)

    def __post_init__(self):
        if not self.kernels:
            raise ParameterError("synthesis layer needs at least one view")
        sizes = {len(k.points) for k in self.kernels}
        if len(sizes) != 1:
            raise ParameterError("all views must share the kernel size")
        n_points = sizes.pop()
        for w in self.weights:
            if w.data.ndim != 3 or w.shape[0] != n_points:
                raise DimensionError(
                    f"weights must be (K^3, C_in, C_out) with K^3={n_points}, got {w.shape}"
                )
        if not self.plans:
            self.plans = [build_plan(k) for k in self.kernels]

    @property
    def num_views(self) -> int:
        return len(self.kernels)

    @property
    def c_in(self) -> int:
        return self.weights[0].shape[1]

    @property
    def c_out(self) -> int:
        return self.weights[0].shape[2]

    def params(self):
        return [(f"view{r}.weights", w) for r, w in enumerate(self.weights)]


def make_synthesis_layer(
    kernel_size: int,
    angle_triples,
    c_in: int,
    c_out: int,
    rng: SplitMix64,
) -> SynthesisLayer:
    kernels = rotated_kernels(kernel_size, angle_triples)
    n_points = kernel_size**3
    scale = 1.0 / np.sqrt(n_points * c_in)
    weights = [
        Tensor(rng.fork(f"view{r}").normal(size=(n_points, c_in, c_out), scale=scale))
        for r in range(len(kernels))
    ]
    return SynthesisLayer(kernels=kernels, weights=weights)


def view_conv_raw(vol: np.ndarray, layer: SynthesisLayer, view: int):
    """Forward one view on a raw array; returns (output, backward) where
    backward accumulates the view's weight gradient and returns dvol."""
    plan = layer.plans[view]
    w = layer.weights[view]
    effective = np.einsum("ok,kij->oij", plan.basis, w.data)
    out_data = _accel.offset_matmul_forward(vol, plan.offsets, effective)

    def backward(dout: np.ndarray) -> np.ndarray:
        dout = np.ascontiguousarray(dout)  # compiled kernels need C layout
        d_eff = _accel.offset_matmul_backward_weights(vol, dout, plan.offsets)
        w.add_grad(np.einsum("ok,oij->kij", plan.basis, d_eff))
        return _accel.offset_matmul_backward_data(dout, plan.offsets, effective)

    return out_data, backward


def synth_view_conv(volume: FeatureVolume, layer: SynthesisLayer, view: int) -> FeatureVolume:
    """One synthetic-view map: rotated-kernel convolution of ``volume``."""
    if not 0 <= view < layer.num_views:
        raise ParameterError(f"view {view} out of range [0, {layer.num_views})")
    if volume.channels != layer.c_in:
        raise DimensionError(
            f"volume has {volume.channels} channels, layer expects {layer.c_in}"
        )
    out_data, backward = view_conv_raw(volume.tensor.data, layer, view)
    out = FeatureVolume(Tensor(out_data, check=False), role="synthetic")

    def vjp(dout: np.ndarray) -> None:
        volume.tensor.add_grad(backward(dout))

    out.tensor.vjp = vjp
    return out


def synth_forward(volume: FeatureVolume, layer: SynthesisLayer) -> list[FeatureVolume]:
    """All synthetic-view maps, one per configured rotation."""
    return [synth_view_conv(volume, layer, r) for r in range(layer.num_views)]
