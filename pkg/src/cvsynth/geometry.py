"""Kernel lattice geometry and the hybrid rotation family.

A cubic kernel of odd side ``K`` is the ordered point set with x varying
fastest, y next, and z decreasing with index, so index 0 is the top-left
vertex ``(-(K-1)/2, -(K-1)/2, (K-1)/2)``, the middle index is the origin,
and the last index is ``((K-1)/2, (K-1)/2, -(K-1)/2)``.

Rotations are composed from three single-angle factors with a deliberate
sign convention: the x and z factors carry negated cosines, so the
zero-angle composite is ``diag(-1, 1, -1)`` rather than the identity.
Every composite is orthogonal with determinant +1. Points transform in
row-vector convention, ``p' = p @ R``, about the fixed kernel center.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

_ORTHO_TOL = 1e-12
_LATTICE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class KernelLattice:
    size: int                 # odd side length
    points: np.ndarray        # (size**3, 3) float64, lattice units


@dataclass(frozen=True, eq=False)
class RotationSpec:
    theta_x: float            # degrees
    theta_y: float
    theta_z: float
    matrix: np.ndarray        # (3, 3) float64


@dataclass(frozen=True, eq=False)
class RotatedKernel:
    spec: RotationSpec
    points: np.ndarray        # (size**3, 3) float64
    lattice_exact: bool       # every point integral within 1e-9

    @property
    def size(self) -> int:
        return round(len(self.points) ** (1.0 / 3.0))


def build_lattice(size: int) -> KernelLattice:
    if size < 1 or size % 2 == 0:
        raise ParameterError(f"kernel side must be odd and positive, got {size}")
    half = (size - 1) // 2
    k = np.arange(size**3)
    x = (k % (size * size)) % size - half
    y = (k % (size * size)) // size - half
    z = half - k // (size * size)
    points = np.stack([x, y, z], axis=1).astype(np.float64)
    return KernelLattice(size=size, points=points)


def _x_factor(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[-c, s, 0.0], [-s, -c, 0.0], [0.0, 0.0, 1.0]])


def _y_factor(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _z_factor(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[1.0, 0.0, 0.0], [0.0, -c, s], [0.0, -s, -c]])


def build_rotation(theta_x: float, theta_y: float, theta_z: float) -> RotationSpec:
    """Compose the x, y, z factors (in that order) for angles in degrees."""
    rx, ry, rz = (np.deg2rad(t) for t in (theta_x, theta_y, theta_z))
    matrix = _x_factor(rx) @ _y_factor(ry) @ _z_factor(rz)
    if np.max(np.abs(matrix.T @ matrix - np.eye(3))) > _ORTHO_TOL:
        raise ParameterError("rotation matrix failed orthogonality check")
    if abs(np.linalg.det(matrix) - 1.0) > _ORTHO_TOL:
        raise ParameterError("rotation matrix determinant is not +1")
    return RotationSpec(theta_x=theta_x, theta_y=theta_y, theta_z=theta_z, matrix=matrix)


def rotate_kernel(lattice: KernelLattice, spec: RotationSpec) -> RotatedKernel:
    points = lattice.points @ spec.matrix
    exact = bool(np.max(np.abs(points - np.round(points))) < _LATTICE_TOL)
    return RotatedKernel(spec=spec, points=points, lattice_exact=exact)


def rotation_set(angle_triples) -> list[RotationSpec]:
    triples = list(angle_triples)
    if not triples:
        raise ParameterError("rotation set must not be empty")
    return [build_rotation(*t) for t in triples]


def rotated_kernels(size: int, angle_triples) -> list[RotatedKernel]:
    lattice = build_lattice(size)
    return [rotate_kernel(lattice, spec) for spec in rotation_set(angle_triples)]


def kernel_table(kernels: list[RotatedKernel]) -> str:
    """Text table of lattice points and their images per view."""
    if not kernels:
        raise ParameterError("no kernels to tabulate")
    size = kernels[0].size
    lattice = build_lattice(size)
    lines = []
    for view, kern in enumerate(kernels):
        spec = kern.spec
        lines.append(
            f"# view {view}: degrees=({spec.theta_x:g},{spec.theta_y:g},{spec.theta_z:g}) "
            f"lattice_exact={str(kern.lattice_exact).lower()}"
        )
        lines.append(f"{'k':>4} {'px':>8} {'py':>8} {'pz':>8} {'qx':>12} {'qy':>12} {'qz':>12}")
        for k in range(size**3):
            p = lattice.points[k]
            q = kern.points[k]
            lines.append(
                f"{k:>4} {p[0]:>8.1f} {p[1]:>8.1f} {p[2]:>8.1f} "
                f"{q[0]:>12.6f} {q[1]:>12.6f} {q[2]:>12.6f}"
            )
    return "\n".join(lines) + "\n"
