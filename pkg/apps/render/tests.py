import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from apps.ingest.models import CanonicalClass as C
from apps.ingest.ortho import read_ppm_pixels
from apps.ingest.synthetic import generate_cluster, generate_tile, generate_wall
from apps.packets.materials import MaterialTable
from apps.packets.models import Material, RenderPacket
from apps.packets.services import build_packets
from apps.sdf.models import SdfSample, TemplateTable
from apps.sdf.primitives import sd_capsule
from apps.sdf.templates import bounding_radius
from apps.spatial.models import Chunk
from apps.spatial.services import build_grid, chunks
from .culling import (
    FRUSTUM, OCCLUSION, HiZPyramid, PreviousView, cull_chunk, occlusion_test, project_quad,
)
from .models import Camera, CameraError, CullStats, RenderParams, Scene
from .services import ViewportError, cull_and_bin, render_frame
from .shading import shade, shade_many, sky
from .tracer import trace_pixel, trace_rays
from .utils import save_image, to_rgb8, write_ppm


def scene_from(points, templates=None, cell_size=1.0, chunk_factor=4) -> Scene:
    index = build_grid(points, cell_size, chunk_factor)
    packets = build_packets(points, index, global_seed=3, templates=templates)
    return Scene(packets, chunks(index, packets), templates)


def lone_packet(center, adjacency=(), table=None, category=C.VEGETATION) -> RenderPacket:
    table = table or TemplateTable()
    radius = bounding_radius(category, adjacency, 0.0, table[category])
    return RenderPacket(tuple(map(float, center)), tuple(adjacency), category, int(category),
                        (1.0, 1.0, 1.0), radius, 7)


def smooth_table(capsule_radius):
    return TemplateTable().replace(C.VEGETATION, capsule_radius=capsule_radius, noise_amplitude=0.0)


def camera(position, target, width=48, height=32, **kwargs) -> Camera:
    return Camera.look_at(position, target, width=width, height=height, near=0.1, far=100.0, **kwargs)


def all_pixels(cam: Camera):
    ys, xs = np.mgrid[0:cam.height, 0:cam.width]
    return xs.ravel(), ys.ravel()


def is_connected(mask: np.ndarray) -> bool:
    """8-connectivity of the set pixels, by repeated dilation from one of them."""
    ys, xs = np.nonzero(mask)
    reached = np.zeros_like(mask)
    reached[ys[0], xs[0]] = True
    h, w = mask.shape
    while True:
        padded = np.pad(reached, 1)
        grown = np.zeros_like(mask)
        for dy in range(3):
            for dx in range(3):
                grown |= padded[dy:dy + h, dx:dx + w]
        grown &= mask
        if np.array_equal(grown, reached):
            return bool(np.array_equal(reached, mask))
        reached = grown


class CameraTests(SimpleTestCase):
    def test_rejects_bad_clip_planes_and_fov(self):
        with self.assertRaises(CameraError):
            Camera.look_at((0, 0, 0), (0, 1, 0), near=5.0, far=5.0)
        with self.assertRaises(CameraError):
            Camera.look_at((0, 0, 0), (0, 1, 0), vertical_fov=math.pi)
        with self.assertRaises(CameraError):
            Camera.look_at((0, 0, 0), (0, 0, 0))

    def test_look_at_basis(self):
        cam = Camera.look_at((1, 2, 3), (4, -1, 0))
        np.testing.assert_allclose(cam.basis @ cam.basis.T, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(cam.forward, np.array([3, -3, -3]) / math.sqrt(27))
        straight_up = Camera.look_at((0, 0, 0), (0, 0, 10))
        np.testing.assert_allclose(straight_up.forward, (0, 0, 1))

    def test_center_ray_is_forward(self):
        cam = camera((0, 0, 0), (0, 5, 0), width=33, height=21)
        np.testing.assert_allclose(cam.ray_directions([16], [10])[0], cam.forward, atol=1e-12)
        top_left = cam.ray_directions([0], [0])[0]
        self.assertLess(float(top_left @ np.asarray(cam.right)), 0.0)
        self.assertGreater(float(top_left @ np.asarray(cam.up)), 0.0)


class ProjectQuadTests(SimpleTestCase):
    def test_on_axis_sphere_is_centered(self):
        cam = camera((0, 0, 0), (0, 10, 0), width=64, height=48)
        rect = project_quad(cam, (0.0, 10.0, 0.0), 0.5)
        self.assertEqual(rect.x0 + rect.x1, 64)
        self.assertEqual(rect.y0 + rect.y1, 48)
        self.assertAlmostEqual(rect.z_near, 9.5)
        self.assertAlmostEqual(rect.z_far, 10.5)

    def test_behind_camera(self):
        cam = camera((0, 0, 0), (0, 10, 0))
        self.assertIsNone(project_quad(cam, (0.0, -10.0, 0.0), 1.0))
        self.assertIsNone(project_quad(cam, (0.0, 500.0, 0.0), 1.0))

    def test_sphere_around_camera_covers_viewport(self):
        cam = camera((0, 0, 0), (0, 10, 0))
        rect = project_quad(cam, (0.0, 0.5, 0.0), 2.0)
        self.assertEqual((rect.x0, rect.y0, rect.x1, rect.y1), (0, 0, cam.width, cam.height))

    def test_every_hit_pixel_is_inside(self):
        rng = np.random.default_rng(0)
        cam = camera((1, -2, 3), (4, 8, 2), width=64, height=48)
        xs, ys = all_pixels(cam)
        dirs = cam.ray_directions(xs, ys)
        origin = np.asarray(cam.position)
        for _ in range(300):
            z = rng.uniform(0.5, 40.0)
            lateral = rng.uniform(-1.3, 1.3, 2) * z * np.array([cam.tan_x, cam.tan_y])
            center = origin + np.array([lateral[0], lateral[1], z]) @ cam.basis
            r = rng.uniform(0.05, 3.0)
            oc = origin - center
            b = dirs @ oc
            disc = b * b - (oc @ oc - r * r)
            hit = (disc >= 0) & (-b + np.sqrt(np.maximum(disc, 0)) >= 0)
            rect = project_quad(cam, center, r)
            if rect is None:
                self.assertFalse(hit.any())
                continue
            inside = (xs >= rect.x0) & (xs < rect.x1) & (ys >= rect.y0) & (ys < rect.y1)
            self.assertTrue(np.all(inside[hit]))

    def test_no_frustum_test_keeps_offscreen_spheres(self):
        cam = camera((0, 0, 0), (0, 10, 0))
        self.assertIsNone(project_quad(cam, (0.0, 500.0, 0.0), 1.0))
        self.assertIsNotNone(project_quad(cam, (0.0, 500.0, 0.0), 1.0, frustum=False))


class HiZTests(SimpleTestCase):
    def test_query_never_underestimates(self):
        rng = np.random.default_rng(1)
        depth = rng.uniform(1.0, 50.0, (23, 37))
        hiz = HiZPyramid(depth)
        self.assertEqual(hiz.levels[-1].shape, (1, 1))
        self.assertEqual(hiz.levels[-1][0, 0], depth.max())
        for _ in range(500):
            x0, y0 = int(rng.integers(0, 37)), int(rng.integers(0, 23))
            x1, y1 = int(rng.integers(x0 + 1, 38)), int(rng.integers(y0 + 1, 24))
            self.assertGreaterEqual(hiz.max_depth(x0, y0, x1, y1), depth[y0:y1, x0:x1].max())


class OcclusionTests(SimpleTestCase):
    def setUp(self):
        self.cam = camera((0, 0, 0), (0, 10, 0), width=64, height=48)
        self.prev = PreviousView(self.cam, HiZPyramid(np.full((48, 64), 5.0)))

    def test_behind_a_full_screen_wall(self):
        self.assertTrue(occlusion_test(self.prev, (0.0, 10.0, 0.0), 1.0))

    def test_in_front_of_the_wall(self):
        self.assertFalse(occlusion_test(self.prev, (0.0, 5.5, 0.0), 1.0))
        self.assertFalse(occlusion_test(self.prev, (0.0, 5.0 + 1.0 + 1e-3, 0.0), 1.0))

    def test_partly_outside_the_previous_view(self):
        edge_x = 10.0 * self.cam.tan_x
        self.assertFalse(occlusion_test(self.prev, (edge_x, 10.0, 0.0), 1.0))

    def test_sphere_reaching_the_near_plane(self):
        self.assertFalse(occlusion_test(self.prev, (0.0, 0.5, 0.0), 1.0))

    def test_chunk_decisions(self):
        def chunk(center, radius):
            return Chunk((0, 0, 0), center, center, (0,), center, radius)

        self.assertEqual(cull_chunk(self.cam, chunk((0.0, -20.0, 0.0), 2.0)).reason, FRUSTUM)
        self.assertTrue(cull_chunk(self.cam, chunk((0.0, 0.5, 0.0), 3.0), self.prev).keep)
        self.assertEqual(cull_chunk(self.cam, chunk((0.0, 20.0, 0.0), 2.0), self.prev).reason,
                         OCCLUSION)
        self.assertTrue(cull_chunk(self.cam, chunk((0.0, 20.0, 0.0), 2.0)).keep)


class TracerTests(SimpleTestCase):
    def test_sphere_hit_distance(self):
        table = smooth_table(1.0)
        scene = Scene([lone_packet((0, 0, 0), table=table)], templates=table)
        hit = trace_pixel(scene, (0.0, 0.0, -5.0), (0.0, 0.0, 1.0), [0], 0.1, 100.0)
        self.assertAlmostEqual(hit.t, 4.0, delta=1e-3)
        np.testing.assert_allclose(hit.normal, (0.0, 0.0, -1.0), atol=1e-6)
        self.assertLess(abs(hit.sample.distance), 1e-3)
        self.assertEqual(hit.sample.material_id, int(C.VEGETATION))

    def test_miss_without_evaluation(self):
        table = smooth_table(1.0)
        scene = Scene([lone_packet((0, 0, 0), table=table)], templates=table)
        self.assertIsNone(trace_pixel(scene, (0.0, 0.0, -5.0), (0.0, 1.0, 0.0), [0], 0.1, 100.0))
        batch = trace_rays(scene, (0.0, 0.0, -5.0), np.array([[0.0, 1.0, 0.0]]), [0], 0.1, 100.0)
        self.assertEqual(int(batch.steps[0]), 0)
        self.assertEqual(int(batch.packet[0]), -1)

    def test_capsule_hits_match_analytic_intersections(self):
        rng = np.random.default_rng(2)
        r = 0.5
        table = smooth_table(r)
        scene = Scene([lone_packet((0, 0, 0), [(2.0, 0.0, 0.0)], table=table)], templates=table)
        a, b = np.zeros(3), np.array([1.0, 0.0, 0.0])
        for _ in range(5):
            origin = np.array([0.5, 0.0, 0.0]) + _unit(rng.normal(size=3)) * 6.0
            targets = np.column_stack([rng.uniform(0.0, 1.0, 200), rng.uniform(-0.15, 0.15, (200, 2))])
            span = np.linalg.norm(targets - origin, axis=1)
            dirs = (targets - origin) / span[:, None]

            lo, hi = np.zeros(200), span.copy()
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                outside = sd_capsule(origin + mid[:, None] * dirs, a, b, r) > 0
                lo, hi = np.where(outside, mid, lo), np.where(outside, hi, mid)

            batch = trace_rays(scene, origin, dirs, [0], 0.1, 100.0, step_scale=1.0)
            self.assertTrue(batch.hit.all())
            np.testing.assert_allclose(batch.t, hi, atol=2e-3)


def _unit(v):
    return v / np.linalg.norm(v)


class ShadingTests(SimpleTestCase):
    def setUp(self):
        self.materials = MaterialTable({C.VEGETATION: Material((1.0, 1.0, 1.0), 0.0, 0.5)})
        self.sample = SdfSample(0.0, int(C.VEGETATION), (1.0, 1.0, 1.0))

    def test_grazing_light_without_specular_is_black(self):
        rgb = shade(self.sample, (0, 0, 1), (0, 0, 1), (1, 0, 0), self.materials)
        self.assertEqual(rgb, (0.0, 0.0, 0.0))

    def test_head_on_white(self):
        rgb = shade(self.sample, (0, 0, 1), (0, 0, 1), (0, 0, 1), self.materials)
        np.testing.assert_allclose(rgb, (1.0, 1.0, 1.0))

    def test_output_is_clamped(self):
        rng = np.random.default_rng(3)
        n = 10_000
        normal = rng.normal(size=(n, 3))
        normal /= np.linalg.norm(normal, axis=1, keepdims=True)
        view = rng.normal(size=(n, 3))
        view /= np.linalg.norm(view, axis=1, keepdims=True)
        roughness = rng.random(n)
        roughness[:100], roughness[100:200] = 0.0, 1.0
        rgb = shade_many(rng.random((n, 3)), rng.random((n, 3)), rng.random(n), roughness,
                         normal, view, (0.3, 0.2, 0.9), ambient=0.5)
        self.assertTrue(np.all((rgb >= 0.0) & (rgb <= 1.0)))

    def test_fully_rough_material_away_from_the_highlight(self):
        for roughness in (0.0, 1.0):
            with self.subTest(roughness=roughness):
                black = shade_many([[1, 1, 1]], [[1, 1, 1]], [0.0], [roughness],
                                   (0, 0, 1), (1, 0, 0), (-1, 0, 0))
                np.testing.assert_array_equal(black, [[0.0, 0.0, 0.0]])
                specular_only = shade_many([[1, 1, 1]], [[0, 0, 0]], [0.5], [roughness],
                                           (0, 0, 1), (1, 0, 0), (-1, 0, 0))
                np.testing.assert_array_equal(specular_only, [[0.0, 0.0, 0.0]])

    def test_fully_rough_highlight_is_flat(self):
        rgb = shade_many([[1, 1, 1]], [[0, 0, 0]], [0.5], [1.0], (0, 0, 1), _unit(np.array([1.0, 0, 1])),
                         (0, 0, 1))
        np.testing.assert_allclose(rgb, [[0.5, 0.5, 0.5]])

    def test_sky_gradient(self):
        out = sky(np.array([[1.0, 0, 0], [0, 0, 1.0], [0, 0, -1.0]]), (1, 1, 1), (0, 0, 0))
        np.testing.assert_array_equal(out, [[1, 1, 1], [0, 0, 0], [1, 1, 1]])


class RenderFrameTests(SimpleTestCase):
    def test_empty_scene_is_sky(self):
        cam = camera((0, 0, 2), (0, 10, 2))
        params = RenderParams()
        fb, stats = render_frame(Scene([]), cam, params)
        expected = sky(cam.ray_directions(*all_pixels(cam)), params.sky_horizon, params.sky_zenith)
        np.testing.assert_array_equal(fb.color, expected.reshape(cam.height, cam.width, 3))
        self.assertTrue(np.all(fb.depth == cam.far))
        self.assertEqual((stats.total, stats.traced, stats.culled), (0, 0, 0))
        self.assertEqual(stats.rays, cam.width * cam.height)

    def test_scene_behind_camera_matches_empty(self):
        scene = scene_from(generate_cluster())
        cam = camera((0, 10, 2), (0, 20, 2))
        empty, _ = render_frame(Scene([]), cam)
        fb, stats = render_frame(scene, cam)
        self.assertEqual(write_ppm(fb), write_ppm(empty))
        np.testing.assert_array_equal(fb.depth, empty.depth)
        self.assertEqual(stats.frustum_culled, len(scene))
        self.assertEqual(stats.traced, 0)

    def test_zero_size_viewport(self):
        cam = Camera.look_at((0, 0, 0), (0, 1, 0), width=0, height=10)
        with self.assertRaises(ViewportError):
            render_frame(Scene([]), cam)

    def test_counter_identity(self):
        scene = scene_from(generate_wall())
        cam = camera((0, -8, 0), (0, 0, 0))
        fb, first = render_frame(scene, cam)
        _, second = render_frame(scene, cam, prev=fb)
        _, reference = render_frame(scene, cam, RenderParams().without_culling())
        for stats in (first, second, reference):
            self.assertEqual(stats.culled + stats.traced, stats.total)
        self.assertEqual(reference.culled, 0)
        self.assertEqual(first.occlusion_culled, 0)
        self.assertIn("total=", second.to_line())

    def test_culled_second_frame_matches_reference(self):
        scenes = [
            (scene_from(generate_cluster()), camera((0, -8, 2), (0, 0, 2))),
            (scene_from(generate_wall()), camera((2, -9, 1), (0, 10, 0))),
            (scene_from(generate_tile(500, seed=4)), camera((-4, -4, 9), (9, 9, 0), width=40, height=24)),
            (scene_from(generate_tile(400, seed=9)), camera((12, -3, 1.5), (5, 8, 0.5), width=40, height=24)),
            (scene_from(generate_wall(seed=5)), camera((-6, 14, 3), (0, 0, 0), width=40, height=24)),
        ]
        for scene, cam in scenes:
            with self.subTest(packets=len(scene)):
                first, _ = render_frame(scene, cam)
                second, stats = render_frame(scene, cam, prev=first)
                reference, _ = render_frame(scene, cam, RenderParams().without_culling())
                self.assertEqual(write_ppm(second), write_ppm(reference))
                np.testing.assert_array_equal(second.depth, reference.depth)
                np.testing.assert_array_equal(second.prev_depth, first.depth)

    def test_level_of_detail_keeps_culling_exact(self):
        scene = scene_from(generate_tile(500, seed=4))
        cam = camera((-4, -4, 9), (9, 9, 0), width=40, height=24)
        lod = RenderParams(lod_pixels=4.0)
        self.assertAlmostEqual(lod.lod_footprint(cam), 8.0 * cam.tan_y / 24)
        self.assertEqual(RenderParams().lod_footprint(cam), 0.0)
        first, _ = render_frame(scene, cam, lod)
        second, _ = render_frame(scene, cam, lod, prev=first)
        reference, _ = render_frame(scene, cam, lod.without_culling())
        self.assertEqual(write_ppm(second), write_ppm(reference))
        np.testing.assert_array_equal(second.depth, reference.depth)

    def test_wall_occludes_the_grove(self):
        points = generate_wall()
        scene = scene_from(points)
        behind = sum(1 for p in scene.packets if p.category == C.VEGETATION)
        cam = camera((0, -8, 0), (0, 0, 0), width=64, height=36)
        first, _ = render_frame(scene, cam)
        _, stats = render_frame(scene, cam, prev=first)
        self.assertGreaterEqual(stats.occlusion_culled, behind * 0.5)

    def test_thread_count_does_not_change_output(self):
        scene = scene_from(generate_tile(400, seed=8))
        cam = camera((-3, -3, 7), (8, 8, 0), width=40, height=24)
        reference, _ = render_frame(scene, cam, workers=1)
        for workers in (2, 8):
            fb, _ = render_frame(scene, cam, workers=workers)
            self.assertEqual(write_ppm(fb), write_ppm(reference))
            np.testing.assert_array_equal(fb.depth, reference.depth)

    def test_nearest_of_overlapping_packets_wins(self):
        table = smooth_table(0.8)
        near_packet = lone_packet((0, 5, 0), table=table)
        far_packet = lone_packet((0.3, 12, 0.2), table=table)
        cam = camera((0, 0, 0), (0, 1, 0))
        depth = {}
        for name, packets in (("near", [near_packet]), ("far", [far_packet]),
                              ("both", [near_packet, far_packet])):
            fb, _ = render_frame(Scene(packets, templates=table), cam)
            depth[name] = fb.depth
        np.testing.assert_allclose(depth["both"], np.minimum(depth["near"], depth["far"]), atol=2e-3)
        self.assertTrue(np.any(depth["near"] < cam.far))

    def test_depth_matches_single_pixel_traces(self):
        scene = scene_from(generate_cluster())
        cam = camera((0, -8, 2), (0, 0, 2))
        params = RenderParams()
        fb, _ = render_frame(scene, cam, params)
        bins, _ = cull_and_bin(scene, cam, params)
        tiles_x = math.ceil(cam.width / params.tile_size)
        hits = np.argwhere(fb.depth < cam.far)
        self.assertGreater(len(hits), 0)
        for y, x in hits[::7]:
            direction = cam.ray_directions([x], [y])[0]
            tile = (y // params.tile_size) * tiles_x + x // params.tile_size
            hit = trace_pixel(scene, cam.position, direction, bins[tile], cam.near, cam.far,
                              step_scale=scene.step_scale())
            self.assertLessEqual(abs(hit.sample.distance), 2 * params.hit_eps)
            self.assertAlmostEqual(hit.t * float(direction @ np.asarray(cam.forward)),
                                   fb.depth[y, x], delta=1e-9)

    def test_vegetation_cluster_amplifies(self):
        scene = scene_from(generate_cluster(1.0))
        cam = camera((0, -8, 2), (0, 0, 2), width=640, height=360)
        fb, _ = render_frame(scene, cam, workers=4)
        silhouette = fb.depth < cam.far
        self.assertGreaterEqual(int(silhouette.sum()), 20 * 5)
        self.assertTrue(is_connected(silhouette))


class ImageTests(SimpleTestCase):
    def test_one_white_pixel(self):
        self.assertEqual(write_ppm(np.ones((1, 1, 3))), b"P6\n1 1\n255\n\xff\xff\xff")

    def test_two_by_two_golden(self):
        color = np.array([[[1, 0, 0], [0, 1, 0]], [[0, 0, 1], [0.5, 0.5, 0.5]]], dtype=np.float64)
        self.assertEqual(write_ppm(color),
                         b"P6\n2 2\n255\n\xff\x00\x00\x00\xff\x00\x00\x00\xff\x80\x80\x80")

    def test_round_trip_through_the_ortho_reader(self):
        color = np.random.default_rng(5).random((13, 17, 3))
        back = read_ppm_pixels(write_ppm(color))
        np.testing.assert_array_equal(np.round(back * 255).astype(np.uint8), to_rgb8(color))

    def test_save_by_extension(self):
        with tempfile.TemporaryDirectory() as tmp:
            color = np.zeros((2, 3, 3))
            self.assertEqual(save_image(color, Path(tmp) / "a.ppm").read_bytes(), write_ppm(color))
            self.assertEqual(save_image(color, Path(tmp) / "a.png").read_bytes()[:4], b"\x89PNG")
            with self.assertRaises(ValueError):
                save_image(color, Path(tmp) / "a.jpg")

    def test_stats_line(self):
        stats = CullStats(total=5, frustum_culled=1, occlusion_culled=2, traced=2, rays=4, steps=10)
        self.assertEqual(stats.to_line(),
                         "total=5 frustum_culled=1 chunk_culled=0 occlusion_culled=2 culled=3 "
                         "traced=2 rays=4 avg_steps=2.50")
