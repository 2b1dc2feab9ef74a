"""Synthetic voxel scenes: single-view observations of simple rooms.

A scene is a labeled grid (empty, floor, wall, box classes) viewed along
the +z axis. The observation keeps only the first occupied voxel of each
(x, y) ray: its class lands in the one-hot semantic volume (with optional
label noise), everything behind it is occluded, and a truncated signed
distance to the occupied surface forms the geometric volume. Voxels
outside a narrowing frustum near the camera plane are marked ignore.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import GenerationError, ParameterError
from .rng import SplitMix64
from .tensor import Tensor
from .tensorfile import load_tensor, save_tensor

IGNORE_LABEL = -1


@dataclass(eq=False)
class SceneSample:
    semantics: Tensor          # (H, W, D, num_classes) one-hot surface observation
    geometry: Tensor           # (H, W, D, 1) truncated signed distance
    labels: np.ndarray         # (H, W, D) int64 full ground truth
    ignore: np.ndarray         # (H, W, D) bool, outside the frustum
    occluded: np.ndarray       # (H, W, D) bool, behind the visible surface
    num_classes: int
    seed: int

    @property
    def volume_shape(self) -> tuple[int, int, int]:
        return self.labels.shape

    def loss_labels(self) -> np.ndarray:
        """Flat labels with ignored voxels mapped to IGNORE_LABEL."""
        flat = self.labels.reshape(-1).copy()
        flat[self.ignore.reshape(-1)] = IGNORE_LABEL
        return flat

    def validate(self) -> None:
        s = self.semantics.data
        if s.shape != self.volume_shape + (self.num_classes,):
            raise ParameterError(f"semantics shape {s.shape} inconsistent")
        sums = s.sum(axis=3)
        if not np.all((sums == 0.0) | (sums == 1.0)):
            raise ParameterError("semantic volume must be one-hot or all-zero per voxel")
        if self.geometry.data.shape != self.volume_shape + (1,):
            raise ParameterError("geometry shape inconsistent")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ParameterError("labels out of class range")


def _truncated_signed_distance(occupied: np.ndarray, truncation: float) -> np.ndarray:
    outside = ndimage.distance_transform_edt(~occupied)
    inside = ndimage.distance_transform_edt(occupied)
    return np.clip(outside - inside, -truncation, truncation) / truncation


def _frustum_ignore(shape, near_fraction: float = 0.7) -> np.ndarray:
    """True where a voxel falls outside the viewing cone, which narrows
    from the full cross-section at max depth down to ``near_fraction``."""
    h, w, d = shape
    ignore = np.zeros(shape, dtype=bool)
    for z in range(d):
        frac = near_fraction + (1.0 - near_fraction) * (z / max(d - 1, 1))
        mx = int(np.floor((1.0 - frac) * h / 2.0))
        my = int(np.floor((1.0 - frac) * w / 2.0))
        if mx > 0:
            ignore[:mx, :, z] = True
            ignore[h - mx:, :, z] = True
        if my > 0:
            ignore[:, :my, z] = True
            ignore[:, w - my:, z] = True
    return ignore


def _build_labels(rng: SplitMix64, shape, num_classes: int, box_count: int) -> np.ndarray:
    h, w, d = shape
    labels = np.zeros(shape, dtype=np.int64)
    floor_class = 1
    wall_class = 2 if num_classes >= 3 else 1
    floor_h = max(1, w // 8)
    wall_t = max(1, d // 16)
    labels[:, :floor_h, :] = floor_class
    labels[:, :, d - wall_t:] = wall_class
    for i in range(box_count):
        if num_classes >= 4:
            box_class = 3 + i % (num_classes - 3)
        else:
            box_class = num_classes - 1
        sx = rng.integers(2, max(3, h // 3) + 1)
        sy = rng.integers(2, max(3, w // 2) + 1)
        sz = rng.integers(2, max(3, d // 3) + 1)
        max_x = h - sx
        max_z = d - wall_t - sz
        if max_x < 1 or max_z < 1:
            continue
        x0 = rng.integers(0, max_x)
        z0 = rng.integers(0, max_z)
        labels[x0:x0 + sx, floor_h:floor_h + sy, z0:z0 + sz] = box_class
    return labels


def _observe(rng: SplitMix64, labels: np.ndarray, num_classes: int, noise: float):
    """Single-view observation along +z: semantics at first hits, occlusion
    mask behind them."""
    h, w, d = labels.shape
    occupied = labels != 0
    any_hit = occupied.any(axis=2)
    first = np.where(any_hit, occupied.argmax(axis=2), d)
    zidx = np.arange(d)
    occluded = zidx[None, None, :] > first[:, :, None]

    semantics = np.zeros((h, w, d, num_classes), dtype=np.float64)
    xs, ys = np.nonzero(any_hit)
    for x, y in zip(xs, ys):
        z = first[x, y]
        cls = int(labels[x, y, z])
        if noise > 0.0 and rng.uniform() < noise:
            cls = rng.integers(1, num_classes)
        semantics[x, y, z, cls] = 1.0
    return semantics, occluded


def generate_scene(seed: int, extents, num_classes: int = 4, box_count: int = 2,
                   noise: float = 0.05, truncation: float = 3.0,
                   max_retries: int = 16) -> SceneSample:
    """Deterministic scene for a seed; retries with perturbed seeds until
    the sample has an occluded occupied voxel inside the frustum."""
    extents = tuple(int(e) for e in extents)
    if len(extents) != 3 or min(extents) < 4:
        raise ParameterError(f"extents must be 3 values >= 4, got {extents}")
    if num_classes < 2:
        raise ParameterError("num_classes must be >= 2")
    for attempt in range(max_retries):
        stream = SplitMix64(seed).fork(f"scene{attempt}")
        labels = _build_labels(stream.fork("layout"), extents, num_classes, box_count)
        semantics, occluded = _observe(stream.fork("observe"), labels, num_classes, noise)
        ignore = _frustum_ignore(extents)
        useful = occluded & (labels != 0) & ~ignore
        if not useful.any() or len(np.unique(labels)) < 2:
            continue
        geometry = _truncated_signed_distance(labels != 0, truncation)[..., None]
        sample = SceneSample(
            semantics=Tensor(semantics),
            geometry=Tensor(geometry),
            labels=labels,
            ignore=ignore,
            occluded=occluded,
            num_classes=num_classes,
            seed=seed,
        )
        sample.validate()
        return sample
    raise GenerationError(
        f"no usable scene after {max_retries} attempts (seed {seed}, extents {extents})"
    )


def class_names(num_classes: int) -> list[str]:
    names = ["empty", "floor", "wall"][:num_classes]
    names += [f"box{i}" for i in range(1, num_classes - len(names) + 1)]
    return names


def dump_label_grid(path, labels: np.ndarray) -> None:
    """Occupied voxels as CSV rows (x, y, z, label); a plain-text stand-in
    for mesh rendering."""
    labels = np.asarray(labels, dtype=np.int64)
    with open(path, "w") as fh:
        fh.write("x,y,z,label\n")
        for x, y, z in np.argwhere(labels != 0):
            fh.write(f"{x},{y},{z},{labels[x, y, z]}\n")


def save_scene(directory, sample: SceneSample) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_tensor(directory / "semantics.cvst", sample.semantics)
    save_tensor(directory / "geometry.cvst", sample.geometry)
    save_tensor(directory / "labels.cvst", sample.labels.astype(np.float64))
    save_tensor(directory / "ignore.cvst", sample.ignore.astype(np.float64))
    save_tensor(directory / "occluded.cvst", sample.occluded.astype(np.float64))
    dump_label_grid(directory / "labels.csv", sample.labels)
    manifest = {
        "extents": list(sample.volume_shape),
        "num_classes": sample.num_classes,
        "class_names": class_names(sample.num_classes),
        "seed": sample.seed,
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_scene(directory) -> SceneSample:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    sample = SceneSample(
        semantics=load_tensor(directory / "semantics.cvst"),
        geometry=load_tensor(directory / "geometry.cvst"),
        labels=load_tensor(directory / "labels.cvst").data.astype(np.int64),
        ignore=load_tensor(directory / "ignore.cvst").data.astype(bool),
        occluded=load_tensor(directory / "occluded.cvst").data.astype(bool),
        num_classes=int(manifest["num_classes"]),
        seed=int(manifest["seed"]),
    )
    sample.validate()
    return sample
