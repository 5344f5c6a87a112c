import io
import json
import tempfile
from pathlib import Path

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, override_settings
from PIL import Image

from apps.ingest.formats import parse_packed_binary, write_xyzc
from apps.ingest.models import RawPoint
from apps.packets.models import RenderPacket
from apps.packets.storage import read_packet_file, write_packets
from .config import ConfigError, RenderConfig, config_from_options, load_config
from .paths import CameraPath, CameraPathError, Keyframe, parse_camera_path
from .management.commands.flythrough import frame_path

VIEW = ["--camera=-4,-4,9", "--look-at=7,7,0", "--width", "32", "--height", "20",
        "--threads", "1"]


def call(*args) -> str:
    out = io.StringIO()
    call_command(*args, stdout=out)
    return out.getvalue()


def fields(line: str) -> dict[str, str]:
    return dict(part.split("=", 1) for part in line.split())


class CommandTestCase(SimpleTestCase):
    def setUp(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.dir = Path(tmp.name)

    def path(self, name: str) -> str:
        return str(self.dir / name)

    def tile_scene(self) -> str:
        call("gen_synthetic", "tile", self.path("tile.xyzc"), "--points", "300", "--seed", "2")
        call("build", self.path("tile.xyzc"), self.path("tile.pkt"), "--cell-size", "1",
             "--threads", "1")
        return self.path("tile.pkt")


class IngestCommandTests(CommandTestCase):
    def test_three_lines(self):
        Path(self.path("in.xyzc")).write_text("0 0 0 1\n1 0 0 2\n2 0 0 2\n")
        out = call("ingest", self.path("in.xyzc"), self.path("out.pamp"))
        self.assertIn("points=3", out)
        self.assertIn("class.ground=1", out)
        self.assertIn("class.vegetation=2", out)
        self.assertEqual(len(parse_packed_binary(Path(self.path("out.pamp")).read_bytes())), 3)

    def test_parse_error_names_the_line(self):
        Path(self.path("bad.xyzc")).write_text("0 0 0 1\n0 0 x 1\n")
        with self.assertRaises(CommandError) as ctx:
            call("ingest", self.path("bad.xyzc"), self.path("out.pamp"))
        self.assertIn("line 2", str(ctx.exception))
        self.assertFalse(Path(self.path("out.pamp")).exists())

    def test_histogram_sums_to_point_count(self):
        call("gen_synthetic", "tile", self.path("tile.pamp"), "--points", "5000", "--seed", "1")
        out = call("ingest", self.path("tile.pamp"), self.path("copy.pamp"))
        lines = out.split()
        total = int(fields(lines[0])["points"])
        per_class = [int(v) for line in lines[1:] for k, v in fields(line).items()
                     if k.startswith("class.")]
        self.assertEqual(sum(per_class), total)
        self.assertEqual(Path(self.path("copy.pamp")).read_bytes(),
                         Path(self.path("tile.pamp")).read_bytes())


class BuildCommandTests(CommandTestCase):
    def test_single_point(self):
        Path(self.path("one.xyzc")).write_text("5 5 5 8\n")
        out = call("build", self.path("one.xyzc"), self.path("one.pkt"))
        self.assertEqual(fields(out)["packets"], "1")
        f = read_packet_file(Path(self.path("one.pkt")).read_bytes())
        self.assertEqual(f.packets[0].degree, 0)

    def test_byte_identical_across_runs_and_threads(self):
        call("gen_synthetic", "tile", self.path("tile.xyzc"), "--points", "2000", "--seed", "3")
        outputs = []
        for threads in ("1", "4"):
            target = self.path(f"t{threads}.pkt")
            call("build", self.path("tile.xyzc"), target, "--seed", "7", "--threads", threads)
            outputs.append(Path(target).read_bytes())
        call("build", self.path("tile.xyzc"), self.path("again.pkt"), "--seed", "7", "--threads", "1")
        self.assertEqual(outputs[0], outputs[1])
        self.assertEqual(outputs[0], Path(self.path("again.pkt")).read_bytes())

    def test_dense_cloud_saturates_adjacency(self):
        rng = np.random.default_rng(4)
        xyz = rng.uniform(0.0, 10.0, size=(2000, 3))
        Path(self.path("dense.xyzc")).write_bytes(
            write_xyzc([RawPoint(*map(float, p), 2) for p in xyz]))
        out = call("build", self.path("dense.xyzc"), self.path("dense.pkt"), "--cell-size", "1")
        self.assertAlmostEqual(float(fields(out)["mean_degree"]), 8.0, delta=0.4)

    def test_missing_world_file(self):
        Path(self.path("one.xyzc")).write_text("0 0 0 1\n")
        Image.new("RGB", (2, 2)).save(self.path("ortho.ppm"))
        with self.assertRaises(CommandError) as ctx:
            call("build", self.path("one.xyzc"), self.path("one.pkt"), "--ortho", self.path("ortho.ppm"))
        self.assertIn(".wld", str(ctx.exception))

    def test_missing_cloud(self):
        with self.assertRaises(CommandError):
            call("build", self.path("nope.xyzc"), self.path("one.pkt"))


class RenderCommandTests(CommandTestCase):
    def test_empty_scene_is_background(self):
        Path(self.path("empty.pkt")).write_bytes(write_packets([], []))
        out = call("render", self.path("empty.pkt"), self.path("empty.png"), *VIEW, "--stats")
        self.assertEqual(fields(out.splitlines()[0])["total"], "0")
        with Image.open(self.path("empty.png")) as img:
            self.assertEqual(img.size, (32, 20))

    def test_stats_counter_identity(self):
        scene = self.tile_scene()
        out = call("render", scene, self.path("a.ppm"), *VIEW, "--stats", "--frames", "2")
        lines = out.splitlines()
        self.assertEqual(len(lines), 3)
        for line in lines[:2]:
            stats = fields(line)
            self.assertEqual(int(stats["culled"]) + int(stats["traced"]), int(stats["total"]))

    def test_second_culled_frame_matches_reference(self):
        scene = self.tile_scene()
        call("render", scene, self.path("culled.ppm"), *VIEW, "--frames", "2")
        call("render", scene, self.path("reference.ppm"), *VIEW, "--no-cull")
        self.assertEqual(Path(self.path("culled.ppm")).read_bytes(),
                         Path(self.path("reference.ppm")).read_bytes())

    def test_invalid_camera_fails_before_loading(self):
        with self.assertRaises(CommandError) as ctx:
            call("render", self.path("missing.pkt"), self.path("a.ppm"), "--near", "5", "--far", "5")
        self.assertIn("near", str(ctx.exception))

    def test_corrupt_scene(self):
        Path(self.path("bad.pkt")).write_bytes(b"garbage")
        with self.assertRaises(CommandError):
            call("render", self.path("bad.pkt"), self.path("a.ppm"), *VIEW)

    def test_unsupported_image_format(self):
        Path(self.path("empty.pkt")).write_bytes(write_packets([], []))
        with self.assertRaises(CommandError):
            call("render", self.path("empty.pkt"), self.path("a.jpg"), *VIEW)


class FlythroughCommandTests(CommandTestCase):
    def write_path(self, keyframes, frame_rate=1.0) -> str:
        target = self.path("path.json")
        Path(target).write_text(json.dumps({"frame_rate": frame_rate, "keyframes": keyframes}))
        return target

    def test_single_keyframe_matches_render(self):
        scene = self.tile_scene()
        path = self.write_path([{"time": 0, "position": [-4, -4, 9], "look_at": [7, 7, 0]}])
        out = call("flythrough", scene, path, self.path("frames"), *VIEW)
        self.assertIn("wrote 1 frames", out)
        call("render", scene, self.path("single.ppm"), *VIEW)
        self.assertEqual((self.dir / "frames" / "frame_0000.ppm").read_bytes(),
                         Path(self.path("single.ppm")).read_bytes())

    def test_static_path_frames_are_identical(self):
        scene = self.tile_scene()
        pose = {"position": [-4, -4, 9], "look_at": [7, 7, 0]}
        path = self.write_path([{"time": 0, **pose}, {"time": 9, **pose}])
        out = call("flythrough", scene, path, self.path("f{frame:02d}.ppm"), *VIEW, "--stats")
        self.assertIn("wrote 10 frames", out)
        first = Path(self.path("f00.ppm")).read_bytes()
        for frame in range(1, 10):
            self.assertEqual(Path(self.path(f"f{frame:02d}.ppm")).read_bytes(), first)
        later = [fields(line.split(" ", 1)[1]) for line in out.splitlines() if line.startswith("frame=")]
        self.assertEqual(len(later), 10)
        self.assertEqual(later[0]["occlusion_culled"], "0")

    def test_unordered_keyframes(self):
        Path(self.path("empty.pkt")).write_bytes(write_packets([], []))
        path = self.write_path([
            {"time": 1, "position": [0, 0, 0], "look_at": [0, 1, 0]},
            {"time": 0, "position": [0, 0, 0], "look_at": [0, 1, 0]},
        ])
        with self.assertRaises(CommandError) as ctx:
            call("flythrough", self.path("empty.pkt"), path, self.path("frames"))
        self.assertIn("increasing", str(ctx.exception))

    def test_png_sequence(self):
        Path(self.path("empty.pkt")).write_bytes(write_packets([], []))
        path = self.write_path([{"time": 0, "position": [0, 0, 0], "look_at": [0, 1, 0]},
                                {"time": 1, "position": [0, 1, 0], "look_at": [0, 2, 0]}], 2.0)
        call("flythrough", self.path("empty.pkt"), path, self.path("frames"), *VIEW,
             "--image-format", "png")
        self.assertEqual(sorted(p.name for p in (self.dir / "frames").iterdir()),
                         ["frame_0000.png", "frame_0001.png", "frame_0002.png"])

    def test_frame_path(self):
        self.assertEqual(frame_path("out", 7, "png"), Path("out/frame_0007.png"))
        self.assertEqual(frame_path("out/f{frame:03d}.ppm", 7, "png"), Path("out/f007.ppm"))


class StatsCommandTests(CommandTestCase):
    def test_three_packet_line(self):
        Path(self.path("line.xyzc")).write_text("0 0 0 2\n1 0 0 2\n2 0 0 2\n")
        call("build", self.path("line.xyzc"), self.path("line.pkt"), "--cell-size", "1",
             "--radius-max", "1.5")
        out = fields(call("stats", self.path("line.pkt")))
        self.assertEqual(out["packets"], "3")
        self.assertEqual(out["class.vegetation"], "3")
        self.assertEqual((out["degree.0"], out["degree.1"], out["degree.2"]), ("0", "2", "1"))
        self.assertIn("radius.p50", out)

    def test_degree_distribution_matches_recount(self):
        scene = self.tile_scene()
        out = fields(call("stats", scene))
        packets = read_packet_file(Path(scene).read_bytes()).packets
        for degree in range(9):
            expected = sum(1 for p in packets if p.degree == degree)
            self.assertEqual(int(out[f"degree.{degree}"]), expected)
        classes = sum(int(v) for k, v in out.items() if k.startswith("class."))
        self.assertEqual(classes, len(packets))

    def test_corrupt_file(self):
        packet = RenderPacket((0.0, 0.0, 0.0), (), 3, 3, (1.0, 1.0, 1.0), 0.5, 1)
        data = write_packets([packet], [])
        Path(self.path("cut.pkt")).write_bytes(data[:-3])
        with self.assertRaises(CommandError):
            call("stats", self.path("cut.pkt"))


class GenSyntheticCommandTests(CommandTestCase):
    def test_seeded_tile(self):
        call("gen_synthetic", "tile", self.path("a.pamp"), "--points", "500", "--seed", "9")
        call("gen_synthetic", "tile", self.path("b.pamp"), "--points", "500", "--seed", "9")
        a = Path(self.path("a.pamp")).read_bytes()
        self.assertEqual(a, Path(self.path("b.pamp")).read_bytes())
        self.assertGreater(len(parse_packed_binary(a)), 400)

    def test_cluster_as_text(self):
        out = call("gen_synthetic", "cluster", self.path("c.xyzc"), "--spacing", "2")
        self.assertIn("cluster: 5 points", out)
        self.assertTrue(Path(self.path("c.xyzc")).read_text().strip())


class ConfigTests(CommandTestCase):
    def test_dump_then_load_reproduces_the_config(self):
        target = self.path("run.cfg")
        config = config_from_options({
            "width": 123, "camera_position": (1.5, -2.0, 3.25), "global_seed": 0xFFFF_FFFF_FFFF,
            "no_cull": True, "class_map": "asprs", "dump_config": target,
        })
        self.assertFalse(config.cull_occlusion)
        self.assertEqual(load_config(target), config)
        again = self.path("again.cfg")
        config_from_options({"config": target, "dump_config": again})
        self.assertEqual(Path(again).read_text(), Path(target).read_text())

    def test_command_flags_round_trip(self):
        target = self.path("run.cfg")
        config = config_from_options({
            "frames": 3, "fps": 12.5, "image_format": "png", "ortho": "site/ortho.ppm",
            "stats": True, "lod_pixels": 1.5, "dump_config": target,
        })
        loaded = load_config(target)
        self.assertEqual(loaded, config)
        self.assertEqual((loaded.frames, loaded.fps, loaded.image_format, loaded.ortho,
                          loaded.stats, loaded.lod_pixels),
                         (3, 12.5, "png", "site/ortho.ppm", True, 1.5))
        self.assertEqual(loaded.render_params().lod_pixels, 1.5)

    def test_render_reads_frames_and_stats_from_the_file(self):
        target = self.path("run.cfg")
        Path(target).write_text("frames=2\nstats=true\n")
        out = call("render", self.tile_scene(), self.path("a.ppm"), *VIEW, "--config", target)
        self.assertEqual(len([line for line in out.splitlines() if "culled=" in line]), 2)

    def test_flags_override_the_file(self):
        target = self.path("run.cfg")
        Path(target).write_text("width=100\nhit_eps=0.01\ncull_chunk=false\n")
        config = load_config(target, {"width": 64})
        self.assertEqual((config.width, config.hit_eps, config.cull_chunk), (64, 0.01, False))

    def test_rejects_bad_values(self):
        target = self.path("bad.cfg")
        for text in ("colour=red\n", "width=wide\n", "width=0\n", "camera_position=1,2\n",
                     "frames=0\n", "image_format=jpg\n", "lod_pixels=-1\n"):
            Path(target).write_text(text)
            with self.subTest(text=text), self.assertRaises(ConfigError):
                load_config(target)
        with self.assertRaises(ConfigError):
            load_config(self.path("missing.cfg"))

    @override_settings(POINTAMP_THREADS=3)
    def test_thread_count_from_settings(self):
        self.assertEqual(RenderConfig.from_settings().threads, 3)
        self.assertEqual(RenderConfig.from_settings().workers, 3)

    def test_camera_from_config(self):
        camera = RenderConfig(near=1.0, far=50.0, width=20, height=10).camera((0, 0, 0), (0, 5, 0))
        self.assertEqual((camera.width, camera.height, camera.near), (20, 10, 1.0))
        np.testing.assert_allclose(camera.forward, (0.0, 1.0, 0.0))


class CameraPathTests(SimpleTestCase):
    def test_midpoint_is_interpolated(self):
        path = parse_camera_path(json.dumps([
            {"time": 0, "position": [0, 0, 0], "look_at": [0, 10, 0]},
            {"time": 2, "position": [2, 4, 6], "look_at": [0, 10, 4]},
        ]))
        self.assertEqual(path.pose_at(1.0), ((1.0, 2.0, 3.0), (0.0, 10.0, 2.0)))
        self.assertEqual(path.frame_count, 49)
        self.assertEqual(path.pose_at(5.0), ((2.0, 4.0, 6.0), (0.0, 10.0, 4.0)))

    def test_frame_rate_override(self):
        text = json.dumps({"frame_rate": 10, "keyframes": [
            {"time": 0, "position": [0, 0, 0], "look_at": [0, 1, 0]},
            {"time": 1, "position": [0, 0, 0], "look_at": [0, 1, 0]},
        ]})
        self.assertEqual(parse_camera_path(text).frame_count, 11)
        self.assertEqual(parse_camera_path(text, frame_rate=4).frame_count, 5)

    def test_errors(self):
        for text in ("[]", "{", "[1]", '[{"time": 0, "position": [0, 0], "look_at": [0, 1, 0]}]',
                     '[{"time": "soon", "position": [0, 0, 0], "look_at": [0, 1, 0]}]',
                     '[{"position": [0, 0, 0], "look_at": [0, 1, 0]}]'):
            with self.subTest(text=text), self.assertRaises(CameraPathError):
                parse_camera_path(text)
        key = Keyframe(0.0, (0.0, 0.0, 0.0), (0.0, 1.0, 0.0))
        with self.assertRaises(CameraPathError):
            CameraPath((key, key))
        with self.assertRaises(CameraPathError):
            CameraPath((key,), frame_rate=0.0)
