import math

import numpy as np
from django.test import SimpleTestCase

from apps.ingest.models import CanonicalClass as C
from apps.packets.models import RenderPacket
from .models import FAR_DISTANCE, TemplateConfigError, TemplateParams, TemplateTable, parse_template_config
from .noise import fbm_noise, lattice_value, mix_seed, mix_seeds, splitmix64
from .primitives import sd_box, sd_capsule, sd_sphere, smooth_min, smooth_min_nearest
from .scene import scene_sdf, sdf_gradient
from .templates import (
    PacketArrays, bounding_radius, evaluate, lipschitz_bound, lod_octaves, packet_sdf, step_scale,
)


def packet(center=(0.0, 0.0, 0.0), adjacency=(), category=C.VEGETATION, seed=1,
           material_id=None, albedo=(1.0, 1.0, 1.0), radius=10.0):
    return RenderPacket(tuple(map(float, center)), tuple(adjacency), category,
                        int(category) if material_id is None else material_id,
                        albedo, radius, seed)


def quiet(table=None):
    """Templates with every noise amplitude zeroed."""
    table = table or TemplateTable()
    for category, _ in table.items():
        table = table.replace(category, noise_amplitude=0.0)
    return table


def unit_vectors(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


class PrimitiveTests(SimpleTestCase):
    def test_capsule_closed_form(self):
        a, b = (0.0, 0.0, 0.0), (0.0, 0.0, 2.0)
        self.assertAlmostEqual(float(sd_capsule((0, 0, 1), a, b, 0.5)), -0.5, delta=1e-12)
        self.assertAlmostEqual(float(sd_capsule((1, 0, 1), a, b, 0.5)), 0.5, delta=1e-12)
        self.assertAlmostEqual(float(sd_capsule((0, 0, 3), a, b, 0.5)), 0.5, delta=1e-12)

    def test_degenerate_capsule_is_a_sphere(self):
        p = np.random.default_rng(0).normal(size=(100, 3))
        np.testing.assert_allclose(sd_capsule(p, (1, 2, 3), (1, 2, 3), 0.7),
                                   sd_sphere(p, np.array([1.0, 2.0, 3.0]), 0.7))

    def test_capsule_is_one_lipschitz(self):
        rng = np.random.default_rng(1)
        p, q = rng.uniform(-4, 4, (100_000, 3)), rng.uniform(-4, 4, (100_000, 3))
        a, b = np.array([0.3, -1.0, 0.2]), np.array([1.5, 2.0, -0.4])
        gap = np.abs(sd_capsule(p, a, b, 0.4) - sd_capsule(q, a, b, 0.4))
        self.assertTrue(np.all(gap <= np.linalg.norm(p - q, axis=1) + 1e-12))

    def test_box(self):
        c = np.zeros(3)
        self.assertAlmostEqual(float(sd_box(np.array([2.0, 0, 0]), c, 1.0)), 1.0)
        self.assertAlmostEqual(float(sd_box(np.zeros(3), c, 1.0)), -1.0)
        self.assertAlmostEqual(float(sd_box(np.array([2.0, 2, 0]), c, 1.0)), math.sqrt(2))

    def test_smooth_min_cases(self):
        self.assertEqual(smooth_min(1.0, 3.0, 1.5), 1.0)
        self.assertEqual(smooth_min(2.0, 2.0, 0.8), 2.0 - 0.2)
        self.assertEqual(smooth_min(2.0, 1.0, 0.0), 1.0)

    def test_smooth_min_bounds_and_symmetry(self):
        rng = np.random.default_rng(2)
        d1, d2 = rng.uniform(-3, 3, 10_000), rng.uniform(-3, 3, 10_000)
        k = rng.uniform(0, 2, 10_000)
        out = smooth_min(d1, d2, k)
        low = np.minimum(d1, d2)
        self.assertTrue(np.all(out <= low))
        self.assertTrue(np.all(out >= low - k / 4 - 1e-12))
        np.testing.assert_array_equal(out, smooth_min(d2, d1, k))
        self.assertTrue(np.all(smooth_min(d1 + 0.01, d2, k) >= out - 1e-12))

    def test_nearest_blend_is_order_independent(self):
        rng = np.random.default_rng(3)
        d = rng.uniform(-1, 2, (500, 6))
        expected = smooth_min_nearest(d, 0.5)
        for _ in range(5):
            perm = rng.permutation(6)
            np.testing.assert_array_equal(smooth_min_nearest(d[:, perm], 0.5), expected)
        self.assertTrue(np.all(expected >= d.min(axis=1) - 0.125))


class NoiseTests(SimpleTestCase):
    def test_deterministic(self):
        p = np.random.default_rng(4).uniform(-50, 50, (1000, 3))
        np.testing.assert_array_equal(fbm_noise(77, p, 2.0, 3), fbm_noise(77, p, 2.0, 3))
        self.assertFalse(np.array_equal(fbm_noise(77, p, 2.0, 3), fbm_noise(78, p, 2.0, 3)))

    def test_single_octave_hits_lattice_values(self):
        seed = 12345
        ijk = np.random.default_rng(5).integers(-100, 100, (200, 3))
        octave_seed = np.uint64(seed) ^ np.uint64(mix_seed(0x0C7A7E, 0))
        np.testing.assert_array_equal(
            fbm_noise(seed, ijk.astype(np.float64), 1.0, 1),
            lattice_value(octave_seed, ijk[:, 0], ijk[:, 1], ijk[:, 2]),
        )

    def test_bounded(self):
        rng = np.random.default_rng(6)
        p = rng.uniform(-1e3, 1e3, (200_000, 3))
        seeds = rng.integers(0, 2 ** 63, 200_000).astype(np.uint64)
        for octaves in (1, 3, 5):
            self.assertLessEqual(np.abs(fbm_noise(seeds, p, 1.7, octaves)).max(), 1.0)

    def test_per_point_seeds_match_scalar_calls(self):
        p = np.random.default_rng(7).uniform(-5, 5, (20, 3))
        seeds = np.arange(20, dtype=np.uint64) * np.uint64(99991)
        batched = fbm_noise(seeds, p, 2.0, 2)
        for i in range(20):
            self.assertEqual(batched[i], fbm_noise(int(seeds[i]), p[i], 2.0, 2))

    def test_per_point_octaves_match_scalar_calls(self):
        p = np.random.default_rng(16).uniform(-5, 5, (30, 3))
        counts = np.arange(30) % 4 + 1
        batched = fbm_noise(7, p, 1.3, counts)
        for i in range(30):
            self.assertEqual(batched[i], fbm_noise(7, p[i], 1.3, int(counts[i])))

    def test_seed_mixing(self):
        self.assertEqual(splitmix64(np.uint64(0)), np.uint64(0xE220A8397B1DCDAF))
        self.assertEqual(mix_seed(1, 2, 3), mix_seed(1, 2, 3))
        self.assertNotEqual(mix_seed(1, 2, 3), mix_seed(1, 3, 2))
        np.testing.assert_array_equal(mix_seeds(5, np.array([1, 2]), np.array([-3, 4])),
                                      [mix_seed(5, 1, -3), mix_seed(5, 2, 4)])
        with self.assertRaises(ValueError):
            fbm_noise(1, np.zeros(3), 1.0, 0)


class PacketSdfTests(SimpleTestCase):
    def test_isolated_vegetation_is_a_sphere(self):
        table = quiet()
        p = packet((1.0, 2.0, 3.0))
        point = np.array([2.5, 2.0, 3.0])
        sample = packet_sdf(p, table, 0.0, point)
        self.assertAlmostEqual(sample.distance, 1.5 - table[C.VEGETATION].capsule_radius, delta=1e-12)
        self.assertEqual(sample.material_id, int(C.VEGETATION))

    def test_single_neighbour_is_a_capsule(self):
        table = quiet()
        p = packet((0, 0, 0), [(2.0, 0.0, 0.0)])
        r = table[C.VEGETATION].capsule_radius
        for point in ([0.5, 1.0, 0.0], [3.0, 0.0, 0.0], [-1.0, 0.5, 0.2]):
            expected = float(sd_capsule(point, (0, 0, 0), (1.0, 0, 0), r))
            self.assertAlmostEqual(packet_sdf(p, table, 0.0, point).distance, expected, delta=1e-12)

    def test_noise_stays_within_amplitude(self):
        rng = np.random.default_rng(8)
        noisy, flat = TemplateTable(), quiet()
        packets = [packet(rng.uniform(-5, 5, 3), rng.normal(0, 1, (int(rng.integers(0, 9)), 3)).tolist(),
                          category=C(int(rng.integers(0, len(C)))), seed=int(rng.integers(0, 2 ** 62)))
                   for _ in range(50)]
        arrays = PacketArrays.from_packets(packets, rng.uniform(-6, 6, 50))
        idx = rng.integers(0, 50, 10_000)
        points = arrays.centers[idx] + rng.normal(0, 2, (10_000, 3))
        diff = np.abs(evaluate(arrays, noisy, idx, points) - evaluate(arrays, flat, idx, points))
        amplitude = np.array([noisy[c].noise_amplitude for c in arrays.category[idx]])
        self.assertTrue(np.all(diff <= amplitude + 1e-12))

    def test_bounding_radius_is_sound(self):
        rng = np.random.default_rng(9)
        table = TemplateTable()
        for i in range(100):
            category = C(i % len(C))
            center = rng.uniform(-20, 20, 3)
            offsets = rng.normal(0, 1.2, (int(rng.integers(0, 9)), 3))
            ground = float(center[2] + rng.uniform(-1.5, 0.5))
            radius = bounding_radius(category, offsets.tolist(), ground - center[2], table[category])
            p = packet(center, offsets.tolist(), category, seed=int(rng.integers(0, 2 ** 62)))
            arrays = PacketArrays.from_packets([p], [ground])
            points = center + unit_vectors(rng, 1000) * radius * rng.uniform(1.0 + 1e-6, 3.0, (1000, 1))
            d = evaluate(arrays, table, np.zeros(1000, dtype=np.int64), points)
            self.assertTrue(np.all(d > 0), f"{category.label} field not positive outside its sphere")

    def test_box_template_reaches_its_corners(self):
        table = quiet()
        p = packet((0, 0, 0), category=C.BUILDING)
        r = table[C.BUILDING].capsule_radius
        self.assertAlmostEqual(packet_sdf(p, table, 0.0, [r, r, r]).distance, 0.0, delta=1e-12)

    def test_surface_top_follows_ground(self):
        table = quiet()
        p = packet((0, 0, 1.0), category=C.ROAD)
        self.assertAlmostEqual(packet_sdf(p, table, 0.25, [0.1, 0.1, 0.75]).distance, 0.5)
        self.assertAlmostEqual(packet_sdf(p, table, 0.25, [0.1, 0.1, 0.0]).distance, -0.25)
        self.assertGreater(packet_sdf(p, table, 0.25, [5.0, 0.0, 0.25]).distance, 0.0)

    def test_bump_is_a_hemisphere(self):
        table = quiet()
        p = packet((0, 0, 0), category=C.UNKNOWN)
        r = table[C.UNKNOWN].capsule_radius
        self.assertAlmostEqual(packet_sdf(p, table, 0.0, [0, 0, 1.0]).distance, 1.0 - r)
        self.assertAlmostEqual(packet_sdf(p, table, 0.0, [0, 0, -0.1]).distance, 0.1)

    def test_step_scale_and_lipschitz(self):
        veg = TemplateTable()[C.VEGETATION]
        self.assertAlmostEqual(step_scale(veg), 1.0 / (1.0 + 0.25 * 2.0 * 3.0))
        self.assertEqual(step_scale(TemplateTable()[C.ROAD]), 1.0)
        self.assertEqual(lipschitz_bound(TemplateTable()[C.BUILDING]), 1.0)

    def assertNoSignChange(self, arrays, table, scale, rays=100, seed=10):
        rng = np.random.default_rng(seed)
        origins = arrays.centers[0] + unit_vectors(rng, rays) * 4.0
        dirs = (arrays.centers[0] - origins) / 4.0
        for o, d in zip(origins, dirs):
            t = 0.0
            for _ in range(48):
                dist = evaluate(arrays, table, [0], (o + t * d)[None, :])[0]
                if dist < 1e-3:
                    break
                ts = t + np.linspace(0.0, scale * dist, 16)
                along = evaluate(arrays, table, np.zeros(16, dtype=np.int64), o + ts[:, None] * d)
                self.assertTrue(np.all(along > 0))
                t += scale * dist

    def test_no_sign_change_within_a_safe_step(self):
        table = TemplateTable()
        adjacency = np.random.default_rng(9).normal(0, 1, (6, 3)).tolist()
        arrays = PacketArrays.from_packets([packet((0, 0, 0), adjacency, seed=99)])
        self.assertNoSignChange(arrays, table, 1.0 / lipschitz_bound(table[C.VEGETATION]))

    def test_no_sign_change_within_a_render_step(self):
        table = TemplateTable()
        adjacency = np.random.default_rng(9).normal(0, 1, (6, 3)).tolist()
        noised = [category for category, params in table.items() if params.noise_amplitude > 0.0]
        self.assertIn(C.VEGETATION, noised)
        for category in noised:
            with self.subTest(category=category.name):
                arrays = PacketArrays.from_packets([packet((0, 0, 0), adjacency, category, seed=99)])
                self.assertNoSignChange(arrays, table, step_scale(table[category]), rays=200)

    def test_fewer_octaves_at_distance(self):
        params = TemplateTable()[C.VEGETATION]
        wavelength = 1.0 / params.noise_frequency
        footprints = [0.0, 0.99 * wavelength / 4, 0.99 * wavelength / 2, 0.99 * wavelength,
                      10 * wavelength, math.inf]
        self.assertEqual(lod_octaves(params, footprints).tolist(), [3, 3, 2, 1, 1, 1])

    def test_footprint_drops_fine_octaves(self):
        rng = np.random.default_rng(17)
        table = TemplateTable()
        packets = [packet(rng.uniform(-3, 3, 3), rng.normal(0, 1, (4, 3)).tolist(), seed=i)
                   for i in range(10)]
        arrays = PacketArrays.from_packets(packets)
        idx = rng.integers(0, 10, 2000)
        points = arrays.centers[idx] + rng.normal(0, 0.5, (2000, 3))
        full = evaluate(arrays, table, idx, points)
        np.testing.assert_array_equal(evaluate(arrays, table, idx, points, footprint=0.0), full)
        coarse = evaluate(arrays, table, idx, points, footprint=5.0)
        single = evaluate(arrays, table.replace(C.VEGETATION, octaves=1), idx, points)
        np.testing.assert_array_equal(coarse, single)
        self.assertTrue(np.any(coarse != full))


class SceneSdfTests(SimpleTestCase):
    def test_empty_is_far(self):
        sample = scene_sdf([], TemplateTable(), [0, 0, 0])
        self.assertEqual(sample.distance, FAR_DISTANCE)
        self.assertEqual(sample.material_id, -1)

    def test_one_packet_equals_packet_sdf(self):
        table = TemplateTable()
        p = packet((1, 1, 1), [(0.5, 0.0, 0.5)], seed=42)
        for point in ([0, 0, 0], [1.3, 1.0, 1.2], [4, -2, 0]):
            self.assertEqual(scene_sdf([p], table, point),
                             packet_sdf(p, table, 1.0, point))

    def test_far_apart_packets_give_plain_minimum(self):
        table = quiet()
        a, b = packet((0, 0, 0), albedo=(1.0, 0.0, 0.0)), packet((10, 0, 0), albedo=(0.0, 0.0, 1.0))
        point = [2.0, 0.0, 0.0]
        sample = scene_sdf([a, b], table, point)
        self.assertEqual(sample.distance, packet_sdf(a, table, 0.0, point).distance)
        self.assertEqual(sample.albedo, (1.0, 0.0, 0.0))
        self.assertEqual(scene_sdf([b, a], table, [9.0, 0, 0]).albedo, (0.0, 0.0, 1.0))

    def test_blend_gap_is_bounded(self):
        rng = np.random.default_rng(11)
        table = TemplateTable()
        for _ in range(200):
            n = int(rng.integers(1, 11))
            packets = [packet(rng.uniform(-2, 2, 3), rng.normal(0, 0.8, (int(rng.integers(0, 4)), 3)).tolist(),
                              category=C(int(rng.choice([3, 4, 5, 7]))), seed=int(rng.integers(0, 2 ** 62)))
                       for _ in range(n)]
            point = rng.uniform(-3, 3, 3)
            each = [packet_sdf(p, table, p.center[2], point).distance for p in packets]
            blended = scene_sdf(packets, table, point).distance
            self.assertLessEqual(blended, min(each) + 1e-12)
            self.assertGreaterEqual(blended, min(each) - table.max_blend_k / 4 - 1e-12)

    def test_material_from_nearest_contributor(self):
        table = quiet()
        a = packet((0, 0, 0), category=C.VEGETATION)
        b = packet((0.8, 0, 0), category=C.BUILDING)
        sample = scene_sdf([a, b], table, [-0.5, 0, 0])
        self.assertEqual(sample.material_id, int(C.VEGETATION))
        sample = scene_sdf([a, b], table, [1.5, 0, 0])
        self.assertEqual(sample.material_id, int(C.BUILDING))


class GradientTests(SimpleTestCase):
    def test_radial_gradient_of_a_sphere(self):
        g = sdf_gradient(lambda p: np.linalg.norm(p) - 1.0, [2.0, 0.0, 0.0])
        np.testing.assert_allclose(g, [1.0, 0.0, 0.0], atol=1e-6)

    def test_capsule_side(self):
        g = sdf_gradient(lambda p: sd_capsule(p, (0, 0, 0), (0, 0, 2), 0.5), [0.0, 1.0, 1.0])
        np.testing.assert_allclose(g, [0.0, 1.0, 0.0], atol=1e-5)

    def test_flat_field_falls_back_to_up(self):
        np.testing.assert_array_equal(sdf_gradient(lambda p: 3.0, [1, 2, 3]), [0.0, 0.0, 1.0])
        with self.assertRaises(ValueError):
            sdf_gradient(lambda p: 0.0, [0, 0, 0], h=0.0)

    def test_matches_finer_differences(self):
        rng = np.random.default_rng(12)
        table = quiet()
        packets = [packet(rng.uniform(-3, 3, 3), rng.normal(0, 1, (3, 3)).tolist()) for _ in range(6)]

        def field(p):
            return scene_sdf(packets, table, p).distance

        k = table.max_blend_k
        checked = 0
        while checked < 200:
            p = rng.uniform(-5, 5, 3)
            if abs(field(p)) <= k:
                continue
            coarse, fine = sdf_gradient(field, p, 1e-4), sdf_gradient(field, p, 1e-5)
            self.assertGreater(float(coarse @ fine), 0.999)
            checked += 1


class TemplateConfigTests(SimpleTestCase):
    def test_overrides_and_round_trip(self):
        table = parse_template_config({"vegetation.noise_amplitude": "0.1", "grass.octaves": "4",
                                       "road.diffuse": "0.1,0.1,0.1"})
        self.assertEqual(table[C.VEGETATION].noise_amplitude, 0.1)
        self.assertEqual(table[C.GRASS].octaves, 4)
        self.assertEqual(table[C.ROAD], TemplateTable()[C.ROAD])
        self.assertEqual(parse_template_config(table.to_config()), table)

    def test_rejects_bad_keys_and_values(self):
        for values in ({"vegetation": "1"}, {"tree.capsule_radius": "1"},
                       {"vegetation.wobble": "1"}, {"vegetation.capsule_radius": "x"},
                       {"vegetation.capsule_radius": "0"}, {"vegetation.octaves": "1.5"},
                       {"vegetation.taper": "inf"}):
            with self.subTest(values=values), self.assertRaises(TemplateConfigError):
                parse_template_config(values)
        with self.assertRaises(TemplateConfigError):
            TemplateParams(capsule_radius=0.5, taper=2.0)
