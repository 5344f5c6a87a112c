"""Render packets: the per-point descriptor the renderer consumes."""
from __future__ import annotations

import math
from dataclasses import dataclass

from apps.ingest.models import CanonicalClass

Vec3 = tuple[float, float, float]
RGB = tuple[float, float, float]

MAX_ADJACENCY = 8


@dataclass(frozen=True)
class RenderPacket:
    """One amplified point.

    ``adjacency`` holds offsets (neighbour - center) to up to eight
    same-class neighbours. ``seed`` drives per-packet noise variation.
    """

    center: Vec3
    adjacency: tuple[Vec3, ...]
    category: CanonicalClass
    material_id: int
    albedo: RGB
    bounding_radius: float
    seed: int

    def __post_init__(self):
        if len(self.adjacency) > MAX_ADJACENCY:
            raise ValueError(f"{len(self.adjacency)} adjacency offsets, at most {MAX_ADJACENCY} allowed")
        if not all(math.isfinite(c) for c in self.center):
            raise ValueError(f"non-finite packet center {self.center}")
        if not self.bounding_radius > 0:
            raise ValueError(f"bounding radius must be positive, got {self.bounding_radius}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError(f"seed {self.seed} is not a u64")

    @property
    def degree(self) -> int:
        return len(self.adjacency)


@dataclass(frozen=True)
class Material:
    diffuse: RGB
    specular: float
    roughness: float

    def __post_init__(self):
        if len(self.diffuse) != 3 or not all(0.0 <= c <= 1.0 for c in self.diffuse):
            raise ValueError(f"diffuse {self.diffuse} outside the unit interval")
        if not 0.0 <= self.specular <= 1.0:
            raise ValueError(f"specular {self.specular} outside the unit interval")
        if not 0.0 <= self.roughness <= 1.0:
            raise ValueError(f"roughness {self.roughness} outside the unit interval")
