"""
Point-cloud file formats.

- ``.xyzc``: UTF-8 text, one ``x y z class [r g b [intensity]]`` record per
  line, ``#`` comments. Floats are written with ``repr`` so a write/parse
  round trip is bit-exact.
- ``.pamp``: ``PAMP`` magic, u8 version (1), u64 count, then per record
  ``f64 x, f64 y, f64 z, u8 class, u8 flags`` (+ ``3 x u8`` RGB when flags
  bit 0 is set). Little-endian.
"""
import io
import math
import re
import struct
from typing import BinaryIO, Iterable, Optional, Sequence, Union

from .models import RawPoint

ByteSource = Union[bytes, bytearray, memoryview, BinaryIO]

PAMP_MAGIC = b"PAMP"
PAMP_VERSION = 1
FLAG_RGB = 0x01

_HEADER = struct.Struct("<4sBQ")
_RECORD = struct.Struct("<dddBB")
_RGB = struct.Struct("<BBB")
_FIELD_SEP = re.compile(r"[ \t]+")


class FormatError(ValueError):
    """Base error for every pointamp file format."""


class ParseError(FormatError):
    """Malformed text record; ``line`` is 1-based."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class BadMagicError(FormatError):
    pass


class TruncatedError(FormatError):
    pass


class UnsupportedVersionError(FormatError):
    pass


def read_bytes(stream: ByteSource) -> bytes:
    if isinstance(stream, (bytes, bytearray, memoryview)):
        return bytes(stream)
    return stream.read()


# ─── Text (.xyzc) ────────────────────────────────────────────────


def _clean_token(token: str, line: int, what: str) -> None:
    # float()/int() accept digit separators and surrounding Unicode whitespace
    if "_" in token or not token.isprintable():
        raise ParseError(f"{what} {token!r} is not a number", line)


def _parse_real(token: str, line: int, what: str) -> float:
    _clean_token(token, line, what)
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"{what} {token!r} is not a number", line) from None
    if not math.isfinite(value):
        raise ParseError(f"{what} {token!r} is not finite", line)
    return value


def _parse_record(fields: list[str], line: int) -> RawPoint:
    if len(fields) not in (4, 7, 8):
        raise ParseError(
            f"expected 'x y z class [r g b [intensity]]', got {len(fields)} fields",
            line,
        )
    x, y, z = (_parse_real(t, line, "coordinate") for t in fields[:3])
    _clean_token(fields[3], line, "class code")
    try:
        code = int(fields[3])
    except ValueError:
        raise ParseError(f"class code {fields[3]!r} is not an integer", line) from None
    if not 0 <= code <= 255:
        raise ParseError(f"class code {code} outside 0-255", line)

    rgb = None
    intensity = None
    if len(fields) >= 7:
        rgb = tuple(_parse_real(t, line, "color") for t in fields[4:7])
    if len(fields) == 8:
        intensity = _parse_real(fields[7], line, "intensity")
    try:
        return RawPoint(x, y, z, code, rgb, intensity)
    except ValueError as e:
        raise ParseError(str(e), line) from None


def parse_xyzc(stream: ByteSource) -> list[RawPoint]:
    try:
        text = read_bytes(stream).decode("utf-8")
    except UnicodeDecodeError as e:
        raise ParseError(f"stream is not UTF-8 ({e.reason})") from None

    points = []
    for number, raw in enumerate(text.split("\n"), start=1):
        stripped = raw.rstrip("\r").strip(" \t")
        if not stripped or stripped.startswith("#"):
            continue
        points.append(_parse_record(_FIELD_SEP.split(stripped), number))
    return points


def _format_record(p: RawPoint) -> str:
    fields = [repr(p.x), repr(p.y), repr(p.z), str(p.class_code)]
    if p.rgb is not None:
        fields.extend(repr(float(c)) for c in p.rgb)
        if p.intensity is not None:
            fields.append(repr(float(p.intensity)))
    return " ".join(fields)


def write_xyzc(points: Iterable[RawPoint]) -> bytes:
    """Inverse of ``parse_xyzc``."""
    out = io.StringIO()
    for p in points:
        out.write(_format_record(p))
        out.write("\n")
    return out.getvalue().encode("utf-8")


# ─── Binary (.pamp) ──────────────────────────────────────────────


def quantize_unit(value: float) -> int:
    """Unit-interval real → u8, rounding half up."""
    return min(255, max(0, int(math.floor(value * 255.0 + 0.5))))


def parse_packed_binary(stream: ByteSource) -> list[RawPoint]:
    data = read_bytes(stream)
    if len(data) < 4 or data[:4] != PAMP_MAGIC:
        raise BadMagicError(f"not a .pamp stream (magic {data[:4]!r})")
    if len(data) < _HEADER.size:
        raise TruncatedError("truncated .pamp header")
    _, version, count = _HEADER.unpack_from(data, 0)
    if version != PAMP_VERSION:
        raise UnsupportedVersionError(f"unsupported .pamp version {version}")

    points = []
    offset = _HEADER.size
    for i in range(count):
        if offset + _RECORD.size > len(data):
            raise TruncatedError(f"truncated at record {i} of {count}")
        x, y, z, code, flags = _RECORD.unpack_from(data, offset)
        offset += _RECORD.size
        if flags & ~FLAG_RGB:
            raise FormatError(f"record {i}: reserved flag bits set ({flags:#04x})")
        rgb = None
        if flags & FLAG_RGB:
            if offset + _RGB.size > len(data):
                raise TruncatedError(f"truncated rgb at record {i} of {count}")
            rgb = tuple(c / 255.0 for c in _RGB.unpack_from(data, offset))
            offset += _RGB.size
        try:
            points.append(RawPoint(x, y, z, code, rgb))
        except ValueError as e:
            raise FormatError(f"record {i}: {e}") from None
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing bytes after {count} records")
    return points


def write_packed_binary(points: Sequence[RawPoint]) -> bytes:
    """Inverse of ``parse_packed_binary``; rgb is quantised to u8, intensity dropped."""
    out = bytearray(_HEADER.pack(PAMP_MAGIC, PAMP_VERSION, len(points)))
    for p in points:
        flags = FLAG_RGB if p.rgb is not None else 0
        out += _RECORD.pack(p.x, p.y, p.z, p.class_code, flags)
        if p.rgb is not None:
            out += _RGB.pack(*(quantize_unit(c) for c in p.rgb))
    return bytes(out)


def sniff_format(data: bytes) -> str:
    return "pamp" if data[:4] == PAMP_MAGIC else "xyzc"


def parse_cloud(data: bytes, fmt: str = "auto") -> list[RawPoint]:
    """Dispatch on an explicit format name or on the magic bytes."""
    if fmt == "auto":
        fmt = sniff_format(data)
    if fmt == "xyzc":
        return parse_xyzc(data)
    if fmt == "pamp":
        return parse_packed_binary(data)
    raise ValueError(f"unknown point-cloud format {fmt!r}")
