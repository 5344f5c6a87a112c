"""Spatial index types: the two-level grid (cells, chunks above cells)."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from apps.ingest.models import RawPoint

Cell = tuple[int, int, int]
Vec3 = tuple[float, float, float]


@dataclass(frozen=True, eq=False)
class GridIndex:
    """Uniform 3D bucket grid over a point list.

    ``cells[i]`` is ``floor((position[i] - origin) / cell_size)``; each bucket
    lists its point indices in ascending order.
    """

    cell_size: float
    origin: np.ndarray               # (3,)
    buckets: dict[Cell, np.ndarray]
    points: Sequence[RawPoint]
    chunk_factor: int
    positions: np.ndarray = field(repr=False)   # (N, 3) float64
    classes: np.ndarray = field(repr=False)     # (N,) uint8 CanonicalClass values
    cells: np.ndarray = field(repr=False)       # (N, 3) int64

    def __len__(self):
        return len(self.positions)

    @cached_property
    def cell_keys(self) -> np.ndarray:
        """Occupied cells as a (B, 3) array in ``buckets`` order."""
        return np.array(list(self.buckets), dtype=np.int64).reshape(-1, 3)

    @cached_property
    def bucket_members(self) -> list[np.ndarray]:
        return list(self.buckets.values())

    def chunk_of_cell(self, cell) -> Cell:
        f = self.chunk_factor
        return (int(cell[0]) // f, int(cell[1]) // f, int(cell[2]) // f)

    def to_bytes(self) -> bytes:
        """Canonical serialisation (used to compare builds)."""
        out = bytearray(struct.pack("<d3dI", self.cell_size, *self.origin.tolist(),
                                    self.chunk_factor))
        out += struct.pack("<Q", len(self.buckets))
        for cell, members in self.buckets.items():
            out += struct.pack("<3qI", *cell, len(members))
            out += np.asarray(members, dtype="<u4").tobytes()
        return bytes(out)


@dataclass(frozen=True)
class Chunk:
    """A group of packets culled as a unit."""

    chunk_coord: Cell
    aabb_min: Vec3
    aabb_max: Vec3
    packet_indices: tuple[int, ...]
    sphere_center: Vec3
    sphere_radius: float

    @property
    def aabb(self) -> tuple[Vec3, Vec3]:
        return (self.aabb_min, self.aabb_max)
