import math
import struct

import numpy as np
from django.test import SimpleTestCase

from apps.ingest.formats import BadMagicError, FormatError, TruncatedError, UnsupportedVersionError
from apps.ingest.models import CanonicalClass as C, OrthoImage, RawPoint
from apps.sdf.models import TemplateConfigError, TemplateTable
from apps.spatial.services import build_grid, chunks
from .materials import DEFAULT_MATERIALS, NEUTRAL_ALBEDO, MaterialTable, parse_material_config
from .models import Material, RenderPacket
from .services import (
    apply_class_policies, build_packets, class_histogram, degree_histogram, mean_degree,
    packet_seeds, radius_percentiles, round_up_f32,
)
from .storage import read_packet_file, read_packets, write_packets

VEG, BUILDING, GROUND = 2, 8, 1   # DALES codes


def cloud(xyz, code=VEG):
    codes = [code] * len(xyz) if isinstance(code, int) else code
    return [RawPoint(float(x), float(y), float(z), int(c)) for (x, y, z), c in zip(xyz, codes)]


def build(points, cell_size=1.0, **kwargs):
    index = build_grid(points, cell_size)
    return index, build_packets(points, index, **kwargs)


def random_packets(seed, n):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        degree = int(rng.integers(0, 9))
        offsets = rng.normal(0.0, 1.0, (degree, 3)).astype(np.float32).astype(np.float64)
        out.append(RenderPacket(
            center=tuple(rng.uniform(-1e3, 1e3, 3).tolist()),
            adjacency=tuple(tuple(o) for o in offsets.tolist()),
            category=C(int(rng.integers(0, len(C)))),
            material_id=int(rng.integers(0, 65536)),
            albedo=tuple((rng.integers(0, 256, 3) / 255.0).tolist()),
            bounding_radius=float(np.float32(rng.uniform(0.1, 5.0))),
            seed=int(rng.integers(0, 2 ** 63)) * 2 + 1,
        ))
    return out


class BuildPacketsTests(SimpleTestCase):
    def test_collinear_vegetation(self):
        _, packets = build(cloud([(0, 0, 0), (1, 0, 0), (2, 0, 0)]))
        self.assertEqual(sorted(packets[1].adjacency), [(-1.0, 0.0, 0.0), (1.0, 0.0, 0.0)])
        self.assertEqual(packets[0].adjacency, ((1.0, 0.0, 0.0), (2.0, 0.0, 0.0)))

    def test_isolated_building(self):
        _, packets = build(cloud([(0, 0, 0), (50, 0, 0)], [BUILDING, VEG]))
        p = packets[0]
        params = TemplateTable()[C.BUILDING]
        self.assertEqual(p.adjacency, ())
        self.assertEqual(p.category, C.BUILDING)
        self.assertEqual(p.bounding_radius,
                         round_up_f32(params.capsule_radius * math.sqrt(3) + params.noise_amplitude))

    def test_dense_cluster_matches_brute_force(self):
        xyz = np.random.default_rng(1).uniform(0.0, 1.5, (20, 3))
        _, packets = build(cloud(xyz))
        for i, p in enumerate(packets):
            d2 = ((xyz - xyz[i]) ** 2).sum(axis=1)
            d2[i] = np.inf
            nearest = np.lexsort((np.arange(20), d2))[:8]
            expected = (xyz[nearest] - xyz[i]).astype(np.float32).astype(np.float64)
            self.assertEqual(p.degree, 8)
            self.assertEqual(p.adjacency, tuple(tuple(o) for o in expected.tolist()))

    def test_adjacency_points_exist_and_share_class(self):
        rng = np.random.default_rng(2)
        xyz = rng.uniform(0.0, 8.0, (400, 3))
        codes = rng.choice([VEG, BUILDING, 6], 400).tolist()
        index, packets = build(cloud(xyz, codes), radius_max=2.0)
        for i, p in enumerate(packets):
            for o in p.adjacency:
                j = int(np.argmin(((xyz - (xyz[i] + o)) ** 2).sum(axis=1)))
                self.assertEqual(index.classes[j], index.classes[i])
                self.assertLessEqual(np.linalg.norm(o), 2.0 + 1e-6)

    def test_deterministic_across_workers(self):
        xyz = np.random.default_rng(3).uniform(0.0, 12.0, (1500, 3))
        points = cloud(xyz, np.random.default_rng(4).choice([GROUND, VEG, BUILDING], 1500).tolist())
        index = build_grid(points, 1.0)
        reference = write_packets(build_packets(points, index, global_seed=9, workers=1), [])
        for workers in (2, 8):
            packets = build_packets(points, index, global_seed=9, workers=workers)
            self.assertEqual(write_packets(packets, []), reference)

    def test_seed_depends_on_center_and_global_seed(self):
        xyz = np.array([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0002], [1.0, 2.0, 3.0006]])
        seeds = packet_seeds(xyz, 7)
        self.assertEqual(seeds[0], seeds[1])           # same millimetre
        self.assertNotEqual(seeds[0], seeds[2])
        self.assertNotEqual(packet_seeds(xyz, 8)[0], seeds[0])
        np.testing.assert_array_equal(packet_seeds(xyz, 7), seeds)

    def test_albedo_from_ortho_or_defaults(self):
        points = cloud([(0, 0, 0), (1, 0, 0)], [VEG, BUILDING])
        _, plain = build(points)
        self.assertEqual(plain[0].albedo, NEUTRAL_ALBEDO)
        self.assertEqual(plain[1].material_id, int(C.BUILDING))

        pixels = np.full((2, 2, 3), 0.5)
        ortho = OrthoImage(2, 2, pixels, (1.0, 0.0, 0.0, -1.0, 0.0, 1.0))
        _, sampled = build(points, ortho=ortho)
        self.assertEqual(sampled[0].albedo, (128 / 255.0,) * 3)

    def test_bounding_radius_is_float32(self):
        _, packets = build(cloud(np.random.default_rng(5).uniform(0, 4, (50, 3))))
        for p in packets:
            self.assertEqual(float(np.float32(p.bounding_radius)), p.bounding_radius)


class ClassPolicyTests(SimpleTestCase):
    def test_ground_as_grass(self):
        index = build_grid(cloud([(0, 0, 0), (1, 0, 0)], [GROUND, VEG]), 1.0)
        grass = apply_class_policies(index, ground_as="grass")
        self.assertEqual(grass.classes.tolist(), [C.GRASS, C.VEGETATION])
        self.assertIs(apply_class_policies(index), index)
        with self.assertRaises(ValueError):
            apply_class_policies(index, ground_as="water")

    def test_low_vegetation_as_grass(self):
        points = cloud([(0, 0, 0), (0.5, 0, 0.2), (0.5, 0, 3.0)], [GROUND, VEG, VEG])
        index = build_grid(points, 1.0)
        out = apply_class_policies(index, low_veg_as_grass=True, low_veg_height=0.5)
        self.assertEqual(out.classes.tolist(), [C.GROUND, C.GRASS, C.VEGETATION])


class StatisticsTests(SimpleTestCase):
    def test_histograms(self):
        _, packets = build(cloud([(0, 0, 0), (1, 0, 0), (2, 0, 0), (40, 0, 0)]))
        self.assertEqual(degree_histogram(packets), [1, 0, 3, 0, 0, 0, 0, 0, 0])
        self.assertEqual(mean_degree(packets), 1.5)
        self.assertEqual(class_histogram(p.category for p in packets), {C.VEGETATION: 4})
        self.assertEqual(sum(class_histogram(p.category for p in packets).values()), len(packets))
        pct = radius_percentiles(packets)
        self.assertLessEqual(pct[0.0], pct[50.0])
        self.assertEqual(mean_degree([]), 0.0)
        self.assertEqual(radius_percentiles([]), {})


class StorageTests(SimpleTestCase):
    def test_empty_is_header_only(self):
        data = write_packets([], [], global_seed=3, cell_size=1.5, chunk_factor=8)
        self.assertEqual(len(data), struct.calcsize("<4sBQQQdI"))
        f = read_packet_file(data)
        self.assertEqual((f.packets, f.chunks, f.global_seed, f.cell_size, f.chunk_factor),
                         ([], [], 3, 1.5, 8))

    def test_single_packet_round_trip(self):
        packet = RenderPacket((1.0, 2.0, 3.0), (), C.BUILDING, 4, (1.0, 0.0, 0.2), 0.5, 2 ** 64 - 1)
        data = write_packets([packet], [])
        self.assertEqual(read_packets(data), ([packet], []))
        self.assertEqual(write_packets(*read_packets(data)), data)

    def test_random_scene_round_trip(self):
        packets = random_packets(6, 2000)
        index = build_grid(cloud([p.center for p in packets]), 50.0, chunk_factor=2)
        chunk_list = chunks(index, packets)
        data = write_packets(packets, chunk_list, 11, 50.0, 2)
        back_packets, back_chunks = read_packets(data)
        self.assertEqual(back_packets, packets)
        self.assertEqual(back_chunks, chunk_list)
        self.assertEqual(write_packets(back_packets, back_chunks, 11, 50.0, 2), data)

    def test_many_small_scenes_round_trip(self):
        rng = np.random.default_rng(16)
        for case in range(1000):
            packets = random_packets(case, int(rng.integers(0, 12)))
            chunk_list = []
            if packets:
                index = build_grid(cloud([p.center for p in packets]), 200.0, chunk_factor=2)
                chunk_list = chunks(index, packets)
            data = write_packets(packets, chunk_list, case, 200.0, 2)
            f = read_packet_file(data)
            self.assertEqual((f.packets, f.chunks, f.global_seed), (packets, chunk_list, case))
            self.assertEqual(write_packets(f.packets, f.chunks, case, 200.0, 2), data)

    def test_fuzzed_file_reads_or_fails_cleanly(self):
        packets = random_packets(17, 4)
        index = build_grid(cloud([p.center for p in packets]), 200.0, chunk_factor=2)
        data = write_packets(packets, chunks(index, packets), 5, 200.0, 2)
        rng = np.random.default_rng(18)
        for _ in range(1000):
            mutated = bytearray(data)
            kind = int(rng.integers(0, 3))
            if kind == 0:
                for pos in rng.integers(0, len(mutated), int(rng.integers(1, 5))).tolist():
                    mutated[pos] = int(rng.integers(0, 256))
            elif kind == 1:
                del mutated[int(rng.integers(0, len(mutated) + 1)):]
            else:
                mutated.insert(int(rng.integers(0, len(mutated) + 1)), int(rng.integers(0, 256)))
            try:
                f = read_packet_file(bytes(mutated))
            except FormatError:
                continue
            rewritten = write_packets(f.packets, f.chunks, f.global_seed, f.cell_size, f.chunk_factor)
            self.assertEqual(len(rewritten), len(mutated))

    def test_built_packets_survive_the_file(self):
        xyz = np.random.default_rng(7).uniform(0.0, 6.0, (200, 3))
        points = cloud(xyz, np.random.default_rng(8).choice([GROUND, VEG, BUILDING], 200).tolist())
        index, packets = build(points, global_seed=1)
        self.assertEqual(read_packets(write_packets(packets, chunks(index, packets)))[0], packets)

    def test_distinct_errors(self):
        data = write_packets(random_packets(9, 3), [])
        with self.assertRaises(BadMagicError):
            read_packets(b"PKT2" + data[4:])
        with self.assertRaises(TruncatedError):
            read_packets(data[:-1])
        with self.assertRaises(TruncatedError):
            read_packets(data[:10])
        bumped = bytearray(data)
        bumped[4] = 2
        with self.assertRaises(UnsupportedVersionError):
            read_packets(bytes(bumped))
        with self.assertRaises(FormatError):
            read_packets(data + b"\x00")

    def test_rejects_bad_records(self):
        header = struct.pack("<4sBQQQdI", b"PKT1", 1, 1, 0, 0, 0.0, 1)
        too_many = header + struct.pack("<3dB", 0, 0, 0, 9)
        with self.assertRaises(FormatError):
            read_packets(too_many)
        bad_class = header + struct.pack("<3dB", 0, 0, 0, 0) + struct.pack("<BH3BfQ", 42, 0, 0, 0, 0, 1.0, 0)
        with self.assertRaises(FormatError):
            read_packets(bad_class)
        packet = RenderPacket((0.0, 0.0, 0.0), (), C.GROUND, 0, (0.0, 0.0, 0.0), 1.0, 0)
        good = write_packets([packet], [])
        chunk = (struct.pack("<3i6d4dI", 0, 0, 0, *([0.0] * 10), 1) + struct.pack("<I", 5))
        broken = bytearray(good)
        broken[13:21] = struct.pack("<Q", 1)
        with self.assertRaises(FormatError):
            read_packets(bytes(broken) + chunk)


class MaterialTests(SimpleTestCase):
    def test_defaults_cover_every_class(self):
        table = MaterialTable()
        self.assertEqual(len(table), len(C))
        self.assertEqual(table[int(C.VEGETATION)], DEFAULT_MATERIALS[C.VEGETATION])
        diffuse, specular, roughness = table.arrays()
        self.assertEqual(diffuse.shape, (len(C), 3))
        self.assertEqual(roughness[int(C.GROUND)], 0.9)

    def test_overrides(self):
        table = parse_material_config({
            "road.diffuse": "0.1,0.1,0.1", "road.roughness": "0.3",
            "vegetation.albedo": "0.5,0.6,0.7", "vegetation.capsule_radius": "0.4",
        })
        self.assertEqual(table[int(C.ROAD)], Material((0.1, 0.1, 0.1), 0.1, 0.3))
        self.assertEqual(table.default_albedo(C.VEGETATION), (0.5, 0.6, 0.7))
        self.assertEqual(table.default_albedo(C.ROAD), NEUTRAL_ALBEDO)

    def test_invalid_values(self):
        for values in ({"road.specular": "2"}, {"road.diffuse": "1,1"},
                       {"meadow.specular": "0.1"}, {"road.albedo": "0,0,3"}):
            with self.subTest(values=values), self.assertRaises(TemplateConfigError):
                parse_material_config(values)
        with self.assertRaises(ValueError):
            Material((0.5, 0.5, 1.5), 0.1, 0.1)
