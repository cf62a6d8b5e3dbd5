import math

import numpy as np
import pytest

from pointfuse import InvalidInput, edge_features, local_geometry_features, spherical_triplet


def brute_force_edges(points):
    """Oracle: all-pairs search with explicit loops and (d2, index) sorting."""
    n = len(points)
    out = []
    for i in range(n):
        pairs = sorted(
            (sum((points[j][a] - points[i][a]) * (points[j][a] - points[i][a]) for a in range(3)), j)
            for j in range(n) if j != i
        )
        j1, j2 = pairs[0][1], pairs[1][1]
        e1 = [points[j1][a] - points[i][a] for a in range(3)]
        e2 = [points[j2][a] - points[i][a] for a in range(3)]
        nv = [
            e1[1] * e2[2] - e1[2] * e2[1],
            e1[2] * e2[0] - e1[0] * e2[2],
            e1[0] * e2[1] - e1[1] * e2[0],
        ]
        out.append((e1, e2, math.sqrt(pairs[0][0]), math.sqrt(pairs[1][0]), nv))
    return out


class TestSphericalTriplet:
    def test_unit_z(self):
        tx, px, ty, py, tz, pz = spherical_triplet([0.0, 0.0, 1.0])
        assert math.isclose(tz, 0.0, abs_tol=1e-12)
        assert pz == 0.0
        assert math.isclose(tx, math.pi / 2)
        assert math.isclose(px, math.pi / 2)
        assert math.isclose(ty, math.pi / 2)
        assert py == 0.0

    def test_origin_all_zero(self):
        assert spherical_triplet([0.0, 0.0, 0.0]) == (0.0,) * 6

    def test_diagonal_xy(self):
        s = 1.0 / math.sqrt(2.0)
        tx, px, ty, py, tz, pz = spherical_triplet([s, s, 0.0])
        assert math.isclose(tz, math.pi / 2)
        assert math.isclose(pz, math.pi / 4)
        assert math.isclose(tx, math.pi / 4)

    def test_ranges_hold(self):
        rng = np.random.default_rng(0)
        for _ in range(500):
            angles = spherical_triplet(rng.normal(size=3) * 10)
            thetas = angles[0::2]
            phis = angles[1::2]
            assert all(0.0 <= t <= math.pi for t in thetas)
            assert all(-math.pi < p <= math.pi for p in phis)


class TestEdgeFeatures:
    def test_right_angle_triangle(self):
        pts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=float)
        e1, e2, l1, l2, nv = edge_features(pts)
        assert np.allclose(e1[0], [1, 0, 0])  # tie broken toward lower index
        assert np.allclose(e2[0], [0, 1, 0])
        assert l1[0] == 1.0 and l2[0] == 1.0
        assert np.allclose(nv[0], [0, 0, 1])

    def test_collinear_zero_normal(self):
        pts = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]], dtype=float)
        _, _, _, _, nv = edge_features(pts)
        assert np.allclose(nv[0], [0, 0, 0])

    def test_rejects_too_few(self):
        with pytest.raises(InvalidInput):
            edge_features(np.zeros((2, 3)))

    def test_duplicates_are_legal_neighbors(self):
        pts = np.array([[0, 0, 0], [0, 0, 0], [1, 0, 0], [0, 2, 0]], dtype=float)
        e1, e2, l1, l2, nv = edge_features(pts)
        assert l1[0] == 0.0           # the duplicate at index 1
        assert np.allclose(e2[0], [1, 0, 0])
        assert np.allclose(nv[0], [0, 0, 0])

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(1)
        for trial in range(20):
            pts = rng.normal(size=(int(rng.integers(3, 16)), 3))
            e1, e2, l1, l2, nv = edge_features(pts)
            for i, (oe1, oe2, ol1, ol2, onv) in enumerate(brute_force_edges(pts.tolist())):
                assert np.allclose(e1[i], oe1), (trial, i)
                assert np.allclose(e2[i], oe2), (trial, i)
                assert math.isclose(l1[i], ol1, abs_tol=1e-12)
                assert math.isclose(l2[i], ol2, abs_tol=1e-12)
                assert np.allclose(nv[i], onv)

    def test_tie_break_stable_under_permutation(self):
        # equidistant pair from point 0: storage order must follow index
        pts = np.array([[0, 0, 0], [1, 0, 0], [-1, 0, 0], [5, 5, 5]], dtype=float)
        e1, e2, _, _, _ = edge_features(pts)
        assert np.allclose(e1[0], [1, 0, 0])
        assert np.allclose(e2[0], [-1, 0, 0])


class TestLocalGeometryFeatures:
    def test_width_contract(self):
        rng = np.random.default_rng(2)
        out = local_geometry_features(rng.normal(size=(10, 3)))
        assert out.shape == (10, 17)

    def test_lengths_match_edges(self):
        rng = np.random.default_rng(3)
        pts = rng.normal(size=(12, 3))
        out = local_geometry_features(pts)
        e1 = out[:, 9:12]
        e2 = out[:, 12:15]
        assert np.allclose(np.linalg.norm(e1, axis=1), out[:, 15], atol=1e-9)
        assert np.allclose(np.linalg.norm(e2, axis=1), out[:, 16], atol=1e-9)
        assert np.all(out[:, 15] <= out[:, 16] + 1e-12)

    def test_rotation_maps_normals(self):
        rng = np.random.default_rng(4)
        pts = rng.normal(size=(20, 3))
        angle = 0.7
        rot = np.array([
            [math.cos(angle), -math.sin(angle), 0.0],
            [math.sin(angle), math.cos(angle), 0.0],
            [0.0, 0.0, 1.0],
        ])
        base = local_geometry_features(pts)
        rotated = local_geometry_features(pts @ rot.T)
        assert np.allclose(rotated[:, 6:9], base[:, 6:9] @ rot.T, atol=1e-9)
        assert np.allclose(rotated[:, 15:], base[:, 15:], atol=1e-9)

    def test_translation_leaves_edge_columns(self):
        rng = np.random.default_rng(5)
        pts = rng.normal(size=(15, 3))
        base = local_geometry_features(pts)
        moved = local_geometry_features(pts + np.array([3.0, -2.0, 0.5]))
        assert np.allclose(moved[:, 6:], base[:, 6:], atol=1e-9)
        assert not np.allclose(moved[:, :6], base[:, :6])

    def test_normal_magnitude_is_parallelogram_area(self):
        rng = np.random.default_rng(6)
        pts = rng.normal(size=(30, 3))
        out = local_geometry_features(pts)
        nv = out[:, 6:9]
        e1 = out[:, 9:12]
        e2 = out[:, 12:15]
        l1, l2 = out[:, 15], out[:, 16]
        cos_angle = (e1 * e2).sum(axis=1) / np.maximum(l1 * l2, 1e-300)
        sin_angle = np.sqrt(np.clip(1.0 - cos_angle**2, 0.0, 1.0))
        assert np.allclose(np.linalg.norm(nv, axis=1), l1 * l2 * sin_angle, rtol=1e-6)
