import itertools

import numpy as np
import pytest

from cvsynth import (
    ParameterError,
    SplitMix64,
    build_lattice,
    build_rotation,
    rotate_kernel,
)
from cvsynth.geometry import kernel_table, rotated_kernels


class TestLattice:
    def test_anchor_points_k3(self):
        lat = build_lattice(3)
        assert np.array_equal(lat.points[0], [-1.0, -1.0, 1.0])
        assert np.array_equal(lat.points[13], [0.0, 0.0, 0.0])
        assert np.array_equal(lat.points[26], [1.0, 1.0, -1.0])

    def test_anchor_points_general(self):
        for size in (1, 3, 5, 7):
            lat = build_lattice(size)
            half = (size - 1) / 2
            n = size**3
            assert np.array_equal(lat.points[0], [-half, -half, half])
            assert np.array_equal(lat.points[(n - 1) // 2], [0.0, 0.0, 0.0])
            assert np.array_equal(lat.points[n - 1], [half, half, -half])

    def test_k1_degenerate(self):
        lat = build_lattice(1)
        assert lat.points.shape == (1, 3)
        assert np.array_equal(lat.points[0], [0.0, 0.0, 0.0])

    def test_coordinates_in_range_and_distinct(self):
        lat = build_lattice(5)
        assert lat.points.min() == -2.0 and lat.points.max() == 2.0
        assert len({tuple(p) for p in lat.points}) == 125

    def test_x_varies_fastest(self):
        lat = build_lattice(3)
        assert np.array_equal(lat.points[1] - lat.points[0], [1.0, 0.0, 0.0])
        assert np.array_equal(lat.points[3] - lat.points[0], [0.0, 1.0, 0.0])
        assert np.array_equal(lat.points[9] - lat.points[0], [0.0, 0.0, -1.0])

    def test_invalid_sizes(self):
        for bad in (0, -1, 2, 4):
            with pytest.raises(ParameterError):
                build_lattice(bad)


class TestRotation:
    def test_zero_angles_is_signed_flip(self):
        spec = build_rotation(0.0, 0.0, 0.0)
        assert np.array_equal(spec.matrix, np.diag([-1.0, 1.0, -1.0]))

    def test_ninety_about_x(self):
        spec = build_rotation(90.0, 0.0, 0.0)
        expected = np.array([[0.0, -1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, -1.0]])
        assert np.max(np.abs(spec.matrix - expected)) < 1e-12

    def test_orthogonal_unit_determinant(self):
        rng = SplitMix64(100)
        for _ in range(100):
            angles = rng.uniform(size=3) * 720.0 - 360.0
            spec = build_rotation(*angles)
            assert np.max(np.abs(spec.matrix.T @ spec.matrix - np.eye(3))) < 1e-12
            assert abs(np.linalg.det(spec.matrix) - 1.0) < 1e-12


class TestRotatedKernel:
    def test_zero_rotation_is_signed_permutation(self):
        lat = build_lattice(3)
        kern = rotate_kernel(lat, build_rotation(0.0, 0.0, 0.0))
        assert kern.lattice_exact
        original = {tuple(p) for p in lat.points}
        rotated = {tuple(np.round(p)) for p in kern.points}
        assert rotated == original

    def test_ninety_degrees_is_lattice_exact(self):
        lat = build_lattice(3)
        kern = rotate_kernel(lat, build_rotation(90.0, 0.0, 0.0))
        assert kern.lattice_exact

    def test_forty_five_degrees_is_not_exact(self):
        lat = build_lattice(3)
        kern = rotate_kernel(lat, build_rotation(45.0, 0.0, 0.0))
        assert not kern.lattice_exact
        image = kern.points[0]
        assert np.max(np.abs(image - np.round(image))) > 1e-3

    def test_center_point_fixed(self):
        lat = build_lattice(3)
        rng = SplitMix64(5)
        for _ in range(10):
            spec = build_rotation(*(rng.uniform(size=3) * 360.0))
            kern = rotate_kernel(lat, spec)
            assert np.array_equal(kern.points[13], [0.0, 0.0, 0.0])

    def test_rigid_motion_preserves_distances(self):
        lat = build_lattice(3)
        rng = SplitMix64(6)
        base = np.linalg.norm(lat.points[:, None, :] - lat.points[None, :, :], axis=2)
        for _ in range(5):
            spec = build_rotation(*(rng.uniform(size=3) * 360.0))
            pts = rotate_kernel(lat, spec).points
            dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
            assert np.max(np.abs(dist - base)) < 1e-9

    def test_lattice_closure_at_right_angles(self):
        lat = build_lattice(3)
        for tx, ty, tz in itertools.product((0.0, 90.0, 180.0, 270.0), repeat=3):
            kern = rotate_kernel(lat, build_rotation(tx, ty, tz))
            assert kern.lattice_exact, (tx, ty, tz)

    def test_matches_pointwise_matrix_application(self):
        lat = build_lattice(3)
        spec = build_rotation(33.0, -17.0, 140.0)
        kern = rotate_kernel(lat, spec)
        for k in range(27):
            assert np.array_equal(kern.points[k], lat.points[k] @ spec.matrix)


class TestKernelTable:
    def test_table_has_row_per_point(self):
        kernels = rotated_kernels(3, [(45.0, 0.0, 0.0)])
        table = kernel_table(kernels)
        lines = [ln for ln in table.splitlines() if ln and not ln.startswith("#")]
        assert len(lines) == 27 + 1  # header + one row per point
        assert "lattice_exact=false" in table
