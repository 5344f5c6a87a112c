"""
``.pkt`` packet files.

Layout (little-endian)::

    header   4s magic "PKT1", u8 version, u64 packet count, u64 chunk count,
             u64 global seed, f64 cell size, u32 chunk factor
    packet   f64 x3 center, u8 degree, f32 x3 per adjacency offset,
             u8 class, u16 material id, u8 x3 albedo, f32 bounding radius,
             u64 seed
    chunk    i32 x3 coord, f64 x6 aabb, f64 x4 sphere, u32 count,
             u32 per packet index
"""
import struct
from dataclasses import dataclass
from typing import Sequence

from apps.ingest.formats import (
    BadMagicError, ByteSource, FormatError, TruncatedError, UnsupportedVersionError,
    quantize_unit, read_bytes,
)
from apps.ingest.models import CanonicalClass
from apps.spatial.models import Chunk
from .models import MAX_ADJACENCY, RenderPacket

PKT_MAGIC = b"PKT1"
PKT_VERSION = 1

_HEADER = struct.Struct("<4sBQQQdI")
_PACKET_HEAD = struct.Struct("<3dB")
_OFFSET = struct.Struct("<3f")
_PACKET_TAIL = struct.Struct("<BH3BfQ")
_CHUNK_HEAD = struct.Struct("<3i6d4dI")
_INDEX = struct.Struct("<I")


@dataclass(frozen=True)
class PacketFile:
    packets: list[RenderPacket]
    chunks: list[Chunk]
    global_seed: int = 0
    cell_size: float = 0.0
    chunk_factor: int = 1


def write_packets(packets: Sequence[RenderPacket], chunks: Sequence[Chunk],
                  global_seed: int = 0, cell_size: float = 0.0,
                  chunk_factor: int = 1) -> bytes:
    out = bytearray(_HEADER.pack(PKT_MAGIC, PKT_VERSION, len(packets), len(chunks),
                                 global_seed, cell_size, chunk_factor))
    for p in packets:
        out += _PACKET_HEAD.pack(*p.center, len(p.adjacency))
        for offset in p.adjacency:
            out += _OFFSET.pack(*offset)
        out += _PACKET_TAIL.pack(int(p.category), p.material_id,
                                 *(quantize_unit(c) for c in p.albedo),
                                 p.bounding_radius, p.seed)
    for c in chunks:
        out += _CHUNK_HEAD.pack(*c.chunk_coord, *c.aabb_min, *c.aabb_max,
                                *c.sphere_center, c.sphere_radius, len(c.packet_indices))
        out += struct.pack(f"<{len(c.packet_indices)}I", *c.packet_indices)
    return bytes(out)


class _Reader:

    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, fmt: struct.Struct, what: str) -> tuple:
        if self.offset + fmt.size > len(self.data):
            raise TruncatedError(f"truncated .pkt: {what} at byte {self.offset}")
        values = fmt.unpack_from(self.data, self.offset)
        self.offset += fmt.size
        return values


def read_packet_file(stream: ByteSource) -> PacketFile:
    data = read_bytes(stream)
    if data[:4] != PKT_MAGIC:
        raise BadMagicError(f"not a .pkt stream (magic {data[:4]!r})")
    reader = _Reader(data)
    _, version, n_packets, n_chunks, seed, cell_size, chunk_factor = reader.take(_HEADER, "header")
    if version != PKT_VERSION:
        raise UnsupportedVersionError(f"unsupported .pkt version {version}")

    packets = []
    for i in range(n_packets):
        x, y, z, degree = reader.take(_PACKET_HEAD, f"packet {i}")
        if degree > MAX_ADJACENCY:
            raise FormatError(f"packet {i}: degree {degree} exceeds {MAX_ADJACENCY}")
        adjacency = tuple(reader.take(_OFFSET, f"packet {i} offset") for _ in range(degree))
        category, material_id, r, g, b, radius, packet_seed = reader.take(_PACKET_TAIL, f"packet {i}")
        try:
            packets.append(RenderPacket(
                center=(x, y, z),
                adjacency=adjacency,
                category=CanonicalClass(category),
                material_id=material_id,
                albedo=(r / 255.0, g / 255.0, b / 255.0),
                bounding_radius=radius,
                seed=packet_seed,
            ))
        except ValueError as e:
            raise FormatError(f"packet {i}: {e}") from None

    chunks = []
    for i in range(n_chunks):
        head = reader.take(_CHUNK_HEAD, f"chunk {i}")
        count = head[-1]
        indices = tuple(reader.take(_INDEX, f"chunk {i} index")[0] for _ in range(count))
        if any(j >= n_packets for j in indices):
            raise FormatError(f"chunk {i}: packet index out of range")
        chunks.append(Chunk(
            chunk_coord=tuple(head[0:3]),
            aabb_min=tuple(head[3:6]),
            aabb_max=tuple(head[6:9]),
            packet_indices=indices,
            sphere_center=tuple(head[9:12]),
            sphere_radius=head[12],
        ))

    if reader.offset != len(data):
        raise FormatError(f"{len(data) - reader.offset} trailing bytes in .pkt stream")
    return PacketFile(packets, chunks, seed, cell_size, chunk_factor)


def read_packets(stream: ByteSource) -> tuple[list[RenderPacket], list[Chunk]]:
    f = read_packet_file(stream)
    return f.packets, f.chunks
