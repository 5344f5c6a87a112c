from types import SimpleNamespace
from unittest import mock

import numpy as np
from django.test import SimpleTestCase

from apps.ingest.models import CanonicalClass as C, RawPoint
from .services import (
    GridError, build_grid, chunks, estimate_cell_size, knn_all, knn_same_class,
    nearest_ground_heights, query_radius,
)


def make_points(xyz, codes=None) -> list[RawPoint]:
    codes = [1] * len(xyz) if codes is None else codes
    return [RawPoint(float(x), float(y), float(z), int(c)) for (x, y, z), c in zip(xyz, codes)]


def brute_knn(xyz, classes, q, k, radius_max):
    d2 = ((xyz - xyz[q]) ** 2).sum(axis=1)
    ok = (classes == classes[q]) & (d2 <= radius_max * radius_max)
    ok[q] = False
    idx = np.flatnonzero(ok)
    return idx[np.lexsort((idx, d2[idx]))][:k].tolist()


def random_cloud(seed, n, extent=20.0, n_classes=3):
    rng = np.random.default_rng(seed)
    xyz = rng.uniform(0.0, extent, size=(n, 3))
    classes = rng.integers(0, n_classes, size=n).astype(np.uint8)
    return xyz, classes


class BuildGridTests(SimpleTestCase):
    def test_floor_division_buckets(self):
        index = build_grid(make_points([(0, 0, 0), (1, 1, 1), (5, 5, 5)]), 2.0)
        self.assertEqual({k: v.tolist() for k, v in index.buckets.items()},
                         {(0, 0, 0): [0, 1], (2, 2, 2): [2]})
        np.testing.assert_array_equal(index.origin, [0.0, 0.0, 0.0])

    def test_single_point(self):
        index = build_grid(make_points([(3.5, -2.0, 7.0)]), 1.0)
        self.assertEqual(list(index.buckets), [(0, 0, 0)])

    def test_errors(self):
        with self.assertRaises(GridError):
            build_grid([], 1.0)
        with self.assertRaises(GridError):
            build_grid(make_points([(0, 0, 0)]), 0.0)
        with self.assertRaises(GridError):
            build_grid(make_points([(0, 0, 0)]), 1.0, chunk_factor=0)

    def test_buckets_match_scalar_assignment(self):
        xyz, _ = random_cloud(1, 10_000, extent=50.0)
        index = build_grid(make_points(xyz), 1.7)
        origin = xyz.min(axis=0)
        expected: dict = {}
        for i, p in enumerate(xyz.tolist()):
            cell = tuple(int(np.floor((p[a] - origin[a]) / 1.7)) for a in range(3))
            expected.setdefault(cell, []).append(i)
        self.assertEqual({k: v.tolist() for k, v in index.buckets.items()}, expected)

    def test_independent_of_worker_count(self):
        points = make_points(random_cloud(2, 3000)[0])
        reference = build_grid(points, 1.0, workers=1).to_bytes()
        for workers in (2, 8):
            self.assertEqual(build_grid(points, 1.0, workers=workers).to_bytes(), reference)


class KnnTests(SimpleTestCase):
    def test_matches_brute_force(self):
        for seed, n in enumerate(np.linspace(500, 10_000, 20).astype(int).tolist()):
            with self.subTest(seed=seed, points=n):
                xyz, classes = random_cloud(seed, n)
                index = build_grid(make_points(xyz), 1.5, classes=classes)
                batched = knn_all(index, 8, 2.5)
                queries = np.random.default_rng(100 + seed).choice(n, 100, replace=False)
                for q in queries.tolist():
                    expected = brute_knn(xyz, classes, q, 8, 2.5)
                    self.assertEqual(batched[q], expected)
                    self.assertEqual(knn_same_class(index, q, 8, 2.5), expected)
                for q in queries[:10].tolist():
                    self.assertEqual(knn_same_class(index, q, 8, 10.0),
                                     brute_knn(xyz, classes, q, 8, 10.0))

    def test_batched_matches_single_queries(self):
        xyz, classes = random_cloud(7, 600, extent=10.0)
        index = build_grid(make_points(xyz), 1.3, classes=classes)
        batched = knn_all(index, 8, 2.5, workers=4)
        for q in range(len(xyz)):
            self.assertEqual(batched[q], brute_knn(xyz, classes, q, 8, 2.5))

    def test_fine_cells_scan_occupied_buckets(self):
        xyz, classes = random_cloud(11, 200, extent=8.0, n_classes=2)
        index = build_grid(make_points(xyz), 0.05, classes=classes)
        with mock.patch("apps.spatial.services._block_offsets",
                        side_effect=AssertionError("full block scanned")):
            batched = knn_all(index, 8, 3.0)
            singles = [knn_same_class(index, q, 8, 3.0) for q in range(0, len(xyz), 9)]
            around = query_radius(index, xyz[0], 3.0)
        for q in range(len(xyz)):
            self.assertEqual(batched[q], brute_knn(xyz, classes, q, 8, 3.0))
        for q, found in zip(range(0, len(xyz), 9), singles):
            self.assertEqual(found, brute_knn(xyz, classes, q, 8, 3.0))
        d2 = ((xyz - xyz[0]) ** 2).sum(axis=1)
        self.assertEqual(around, np.flatnonzero(d2 <= 9.0).tolist())

    def test_ties_break_by_index(self):
        xyz = np.array([[0, 0, 0], [1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0]], dtype=float)
        index = build_grid(make_points(xyz), 0.5)
        self.assertEqual(knn_same_class(index, 0, 2, 3.0), [1, 2])

    def test_cap_at_k(self):
        ring = [(np.cos(a), np.sin(a), 0.0) for a in np.linspace(0, 2 * np.pi, 12, endpoint=False)]
        index = build_grid(make_points([(0, 0, 0)] + ring), 1.0)
        self.assertEqual(len(knn_same_class(index, 0, 8, 3.0)), 8)

    def test_isolated_and_other_class(self):
        index = build_grid(make_points([(0, 0, 0), (0.5, 0, 0), (10, 0, 0)], [2, 8, 2]), 1.0)
        self.assertEqual(knn_same_class(index, 0, 8, 3.0), [])

    def test_invalid_query(self):
        index = build_grid(make_points([(0, 0, 0)]), 1.0)
        for args in ((1, 8, 3.0), (-1, 8, 3.0), (0, 9, 3.0), (0, 8, 0.0)):
            with self.subTest(args=args), self.assertRaises(GridError):
                knn_same_class(index, *args)


class QueryTests(SimpleTestCase):
    def test_every_point_finds_itself(self):
        xyz, _ = random_cloud(4, 500)
        index = build_grid(make_points(xyz), 2.0)
        for i, p in enumerate(xyz):
            self.assertIn(i, query_radius(index, p, 1e-9))

    def test_estimated_cell_size_on_lattice(self):
        g = np.arange(10.0)
        xyz = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
        self.assertAlmostEqual(estimate_cell_size(xyz), 2.0)
        self.assertEqual(estimate_cell_size(xyz[:1]), 1.0)

    def test_nearest_ground_heights(self):
        xyz = np.array([[0, 0, 1.0], [5, 0, 2.0], [0.2, 0, 7.0], [5.1, 0, 9.0]])
        classes = np.array([C.GROUND, C.ROAD, C.VEGETATION, C.BUILDING])
        heights = nearest_ground_heights(xyz, classes, [np.arange(4)])
        np.testing.assert_array_equal(heights, [1.0, 2.0, 1.0, 2.0])
        no_ground = nearest_ground_heights(xyz, np.full(4, C.POLE), [np.arange(4)])
        np.testing.assert_array_equal(no_ground, np.full(4, 1.0))


def fake_packets(xyz, radii):
    return [SimpleNamespace(center=tuple(c), bounding_radius=float(r)) for c, r in zip(xyz, radii)]


class ChunkTests(SimpleTestCase):
    def test_one_chunk_per_cell_with_factor_one(self):
        xyz, _ = random_cloud(5, 300, extent=6.0)
        index = build_grid(make_points(xyz), 1.0, chunk_factor=1)
        result = chunks(index, fake_packets(xyz, np.full(len(xyz), 0.3)))
        self.assertEqual(len(result), len(index.buckets))

    def test_single_cell_chunk_encloses_largest_packet(self):
        xyz = np.array([[0.1, 0.1, 0.1], [0.2, 0.3, 0.1]])
        result = chunks(build_grid(make_points(xyz), 1.0), fake_packets(xyz, [0.5, 1.5]))
        self.assertEqual(len(result), 1)
        self.assertGreaterEqual(result[0].sphere_radius, 1.5)

    def test_containment(self):
        rng = np.random.default_rng(6)
        xyz = rng.uniform(0.0, 40.0, size=(2000, 3))
        radii = rng.uniform(0.1, 2.0, size=2000)
        index = build_grid(make_points(xyz), 1.0, chunk_factor=4)
        result = chunks(index, fake_packets(xyz, radii))
        seen = sorted(i for c in result for i in c.packet_indices)
        self.assertEqual(seen, list(range(2000)))
        for chunk in result:
            members = list(chunk.packet_indices)
            c, r = xyz[members], radii[members]
            dist = np.linalg.norm(c - np.asarray(chunk.sphere_center), axis=1)
            self.assertTrue(np.all(dist + r <= chunk.sphere_radius + 1e-9))
            self.assertTrue(np.all(c - r[:, None] >= np.asarray(chunk.aabb_min)))
            self.assertTrue(np.all(c + r[:, None] <= np.asarray(chunk.aabb_max)))

    def test_empty(self):
        index = build_grid(make_points([(0, 0, 0)]), 1.0)
        self.assertEqual(chunks(index, []), [])
