import io
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from PIL import Image

from .classmaps import UnknownSchemeError, map_class, map_classes, register_class_map
from .formats import (
    BadMagicError, FormatError, ParseError, TruncatedError, UnsupportedVersionError,
    parse_cloud, parse_packed_binary, parse_xyzc, write_packed_binary, write_xyzc,
)
from .models import CanonicalClass as C, RawPoint, class_codes, positions
from .ortho import OrthoError, read_ortho, read_ppm_pixels, sample_albedo
from .synthetic import generate_cluster, generate_tile, generate_wall


def random_points(rng, n):
    points = []
    for _ in range(n):
        xyz = tuple(map(float, rng.normal(0, 1e3, 3)))
        code = int(rng.integers(0, 256))
        if rng.random() < 0.5:
            points.append(RawPoint(*xyz, code))
            continue
        rgb = tuple(map(float, rng.random(3)))
        intensity = float(rng.random()) if rng.random() < 0.5 else None
        points.append(RawPoint(*xyz, code, rgb, intensity))
    return points


def mutations(data: bytes, rng, cases: int = 1000):
    """Seeded corruptions of ``data``: byte overwrites, cuts and insertions."""
    for _ in range(cases):
        out = bytearray(data)
        kind = int(rng.integers(0, 3))
        if kind == 0 and out:
            for pos in rng.integers(0, len(out), int(rng.integers(1, 5))).tolist():
                out[pos] = int(rng.integers(0, 256))
        elif kind == 1:
            del out[int(rng.integers(0, len(out) + 1)):]
        else:
            out.insert(int(rng.integers(0, len(out) + 1)), int(rng.integers(0, 256)))
        yield bytes(out)


class XyzcTests(SimpleTestCase):
    def test_parses_records_with_optional_fields(self):
        points = parse_xyzc(b"# header\n1 2 3 1\n\n4.5 5 6 8 0.5 0.25 1 0.75\n")
        self.assertEqual(len(points), 2)
        self.assertEqual(points[0], RawPoint(1.0, 2.0, 3.0, 1))
        self.assertEqual(points[1].rgb, (0.5, 0.25, 1.0))
        self.assertEqual(points[1].intensity, 0.75)

    def test_empty_stream(self):
        self.assertEqual(parse_xyzc(b""), [])
        self.assertEqual(parse_xyzc(io.BytesIO(b"# only a comment\n")), [])

    def test_error_names_the_line(self):
        with self.assertRaises(ParseError) as ctx:
            parse_xyzc(b"0 0 0 1\n0 0 oops 1\n")
        self.assertEqual(ctx.exception.line, 2)
        self.assertIn("line 2", str(ctx.exception))

    def test_rejects_wrong_field_count_and_bad_values(self):
        for text in (b"1 2 3\n", b"1 2 3 1 0.5\n", b"1 2 3 300\n", b"1 2 nan 1\n",
                     b"1 2 3 1 2.0 0 0\n"):
            with self.subTest(text=text), self.assertRaises(ParseError):
                parse_xyzc(text)

    def test_rejects_non_utf8(self):
        with self.assertRaises(ParseError):
            parse_xyzc(b"\xff\xfe 1 2 3\n")

    def test_write_then_parse_is_bit_exact(self):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            points = random_points(rng, int(rng.integers(0, 12)))
            self.assertEqual(parse_xyzc(write_xyzc(points)), points)

    def test_fuzzed_text_parses_or_fails_cleanly(self):
        rng = np.random.default_rng(12)
        data = write_xyzc(random_points(rng, 6))
        for mutated in mutations(data, rng):
            try:
                points = parse_xyzc(mutated)
            except ParseError:
                continue
            self.assertEqual(parse_xyzc(write_xyzc(points)), points)

    def test_only_newline_ends_a_record(self):
        for sep in ("\x0b", "\x0c", "\x1c", "\x1d", "\x1e", "\x85", "\u2028"):
            with self.subTest(sep=repr(sep)):
                text = f"0 0 0 1{sep}1 1 1 1\n0 0 x 1\n".encode("utf-8")
                with self.assertRaises(ParseError) as ctx:
                    parse_xyzc(text)
                self.assertEqual(ctx.exception.line, 1)
        self.assertEqual(len(parse_xyzc(b"0 0 0 1\r\n1 1 1 1\r\n")), 2)
        with self.assertRaises(ParseError) as ctx:
            parse_xyzc(b"0 0 0 1\r\n\r\n0 x 0 1\r\n")
        self.assertEqual(ctx.exception.line, 3)

    def test_rejects_digit_separators(self):
        for text in (b"1_000 0 0 1\n", b"0 0 0 1_0\n", b"0 0 0 1 0.5 0.5 0.5 0_1\n"):
            with self.subTest(text=text), self.assertRaises(ParseError):
                parse_xyzc(text)

    def test_intensity_needs_rgb(self):
        with self.assertRaises(ValueError):
            RawPoint(0.0, 0.0, 0.0, 1, intensity=0.5)


class PackedBinaryTests(SimpleTestCase):
    def test_three_point_round_trip(self):
        points = [RawPoint(0.0, 0.0, 0.0, 1), RawPoint(1.5, -2.0, 3.25, 8, (1.0, 0.0, 0.2)),
                  RawPoint(1e6, 2e6, -3.0, 255)]
        data = write_packed_binary(points)
        self.assertEqual(data[:4], b"PAMP")
        self.assertEqual(len(data), 13 + 3 * 26 + 3)
        back = parse_packed_binary(data)
        self.assertEqual([p.position for p in back], [p.position for p in points])
        self.assertEqual(back[1].rgb, (1.0, 0.0, 51 / 255.0))
        self.assertEqual(write_packed_binary(back), data)

    def test_zero_count_header(self):
        self.assertEqual(parse_packed_binary(write_packed_binary([])), [])

    def test_thousand_point_write_parse_write(self):
        points = random_points(np.random.default_rng(13), 1000)
        data = write_packed_binary(points)
        back = parse_packed_binary(data)
        self.assertEqual([p.position for p in back], [p.position for p in points])
        self.assertEqual([p.class_code for p in back], [p.class_code for p in points])
        self.assertEqual(write_packed_binary(back), data)

    def test_fuzzed_binary_parses_or_fails_cleanly(self):
        rng = np.random.default_rng(14)
        data = write_packed_binary(random_points(rng, 5))
        for mutated in mutations(data, rng):
            try:
                points = parse_packed_binary(mutated)
            except FormatError:
                continue
            self.assertEqual(write_packed_binary(points), mutated)

    def test_bad_magic(self):
        with self.assertRaises(BadMagicError):
            parse_packed_binary(b"NOPE" + bytes(9))

    def test_truncated(self):
        data = write_packed_binary([RawPoint(1.0, 2.0, 3.0, 2)] * 2)
        for cut in (6, len(data) - 1):
            with self.subTest(cut=cut), self.assertRaises(TruncatedError):
                parse_packed_binary(data[:cut])

    def test_unsupported_version(self):
        data = bytearray(write_packed_binary([]))
        data[4] = 9
        with self.assertRaises(UnsupportedVersionError):
            parse_packed_binary(bytes(data))

    def test_trailing_bytes_and_reserved_flags(self):
        data = write_packed_binary([RawPoint(0.0, 0.0, 0.0, 1)])
        with self.assertRaises(FormatError):
            parse_packed_binary(data + b"\x00")
        flagged = bytearray(data)
        flagged[-1] = 0x02
        with self.assertRaises(FormatError):
            parse_packed_binary(bytes(flagged))

    def test_parse_cloud_sniffs_the_format(self):
        points = [RawPoint(1.0, 2.0, 3.0, 4)]
        self.assertEqual(parse_cloud(write_packed_binary(points)), points)
        self.assertEqual(parse_cloud(write_xyzc(points)), points)
        with self.assertRaises(ValueError):
            parse_cloud(b"", "las")


class ClassMapTests(SimpleTestCase):
    def test_dales_codes(self):
        self.assertEqual(map_class(1, "dales"), C.GROUND)
        self.assertEqual(map_class(8, "dales"), C.BUILDING)
        self.assertEqual(map_class(0, "dales"), C.UNKNOWN)
        self.assertEqual(map_class(200, "dales"), C.UNKNOWN)

    def test_asprs_codes(self):
        self.assertEqual(map_class(3, "asprs"), C.GRASS)
        self.assertEqual(map_class(11, "asprs"), C.ROAD)

    def test_unknown_scheme(self):
        with self.assertRaises(UnknownSchemeError):
            map_class(1, "nope")

    def test_vectorised_map_matches_scalar(self):
        codes = np.arange(256)
        expected = [int(map_class(c, "asprs")) for c in codes]
        self.assertEqual(map_classes(codes, "asprs").tolist(), expected)

    def test_register_scheme(self):
        register_class_map("test-only", {42: C.FENCE})
        self.assertEqual(map_class(42, "test-only"), C.FENCE)
        with self.assertRaises(ValueError):
            register_class_map("bad", {300: C.FENCE})


class OrthoTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.image = Path(self.tmp.name) / "ortho.ppm"
        pixels = np.zeros((2, 2, 3), dtype=np.uint8)
        pixels[0, 0] = (255, 0, 0)
        pixels[0, 1] = (0, 255, 0)
        pixels[1, 0] = (0, 0, 255)
        pixels[1, 1] = (255, 255, 255)
        Image.fromarray(pixels).save(self.image, format="PPM")

    def write_world(self, text="1\n0\n0\n-1\n0\n1\n"):
        self.image.with_suffix(".wld").write_text(text)

    def test_samples_pixel_centers_and_clamps_outside(self):
        self.write_world()
        img = read_ortho(self.image)
        self.assertEqual((img.width, img.height), (2, 2))
        np.testing.assert_allclose(sample_albedo(img, 0.0, 1.0), (1.0, 0.0, 0.0))
        np.testing.assert_allclose(sample_albedo(img, 1.0, 0.0), (1.0, 1.0, 1.0))
        np.testing.assert_allclose(sample_albedo(img, -50.0, 50.0), (1.0, 0.0, 0.0))
        np.testing.assert_allclose(sample_albedo(img, 0.5, 1.0), (0.5, 0.5, 0.0))

    def test_missing_world_file(self):
        with self.assertRaises(OrthoError) as ctx:
            read_ortho(self.image)
        self.assertIn(".wld", str(ctx.exception))

    def test_fuzzed_ppm_reads_or_fails_cleanly(self):
        rng = np.random.default_rng(15)
        data = self.image.read_bytes()
        for mutated in mutations(data, rng):
            try:
                pixels = read_ppm_pixels(mutated)
            except OrthoError:
                continue
            self.assertEqual(pixels.ndim, 3)
            self.assertTrue(np.all((pixels >= 0.0) & (pixels <= 1.0)))

    def test_bad_world_file(self):
        self.write_world("1\n0\n0\n")
        with self.assertRaises(OrthoError):
            read_ortho(self.image)
        self.write_world("0\n0\n0\n0\n0\n0\n")
        with self.assertRaises(OrthoError):
            read_ortho(self.image)


class SyntheticTests(SimpleTestCase):
    def test_tile_is_seeded(self):
        a = generate_tile(3000, seed=5)
        self.assertEqual(a, generate_tile(3000, seed=5))
        self.assertNotEqual(a, generate_tile(3000, seed=6))
        self.assertAlmostEqual(len(a), 3000, delta=300)
        self.assertGreater(len(set(class_codes(a).tolist())), 3)

    def test_cluster_spacing(self):
        xyz = positions(generate_cluster(1.0))
        self.assertEqual(len(xyz), 5)
        np.testing.assert_allclose(np.linalg.norm(xyz[1:] - xyz[0], axis=1), 1.0)

    def test_wall_splits_building_and_vegetation(self):
        points = generate_wall()
        xyz, codes = positions(points), class_codes(points)
        self.assertTrue(np.all(xyz[codes == 8, 1] == 0.0))
        self.assertTrue(np.all(xyz[codes == 2, 1] >= 5.0))
