"""Renderer types: camera, frame buffers, cull statistics, render parameters."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from apps.packets.materials import MaterialTable
from apps.packets.models import RenderPacket
from apps.sdf.models import TemplateTable
from apps.sdf.scene import class_blend_k, scene_ground_heights
from apps.sdf.templates import PacketArrays, step_scale
from apps.spatial.models import Chunk

Vec3 = tuple[float, float, float]


class CameraError(ValueError):
    pass


def _normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = float(np.linalg.norm(v))
    if n == 0.0 or not math.isfinite(n):
        raise CameraError(f"cannot normalise {tuple(v)}")
    return v / n


@dataclass(frozen=True)
class Camera:
    """Pinhole camera. View space: x right, y up, z forward."""

    position: Vec3
    right: Vec3
    up: Vec3
    forward: Vec3
    vertical_fov: float     # radians
    near: float
    far: float
    width: int
    height: int

    def __post_init__(self):
        if not 0.0 < self.near < self.far:
            raise CameraError(f"need 0 < near < far, got near={self.near} far={self.far}")
        if not 0.0 < self.vertical_fov < math.pi:
            raise CameraError(f"vertical fov {self.vertical_fov} outside (0, pi)")
        if self.width < 0 or self.height < 0:
            raise CameraError(f"negative viewport {self.width}x{self.height}")
        if not all(math.isfinite(c) for c in self.position):
            raise CameraError(f"non-finite camera position {self.position}")
        basis = np.array([self.right, self.up, self.forward], dtype=np.float64)
        if not np.allclose(basis @ basis.T, np.eye(3), rtol=0.0, atol=1e-9):
            raise CameraError("camera basis is not orthonormal")

    @classmethod
    def look_at(cls, position, target, up=(0.0, 0.0, 1.0), vertical_fov: float = math.radians(60.0),
                near: float = 0.1, far: float = 500.0, width: int = 640,
                height: int = 360) -> "Camera":
        position = np.asarray(position, dtype=np.float64)
        forward = _normalize(np.asarray(target, dtype=np.float64) - position)
        up = np.asarray(up, dtype=np.float64)
        if np.linalg.norm(np.cross(forward, up)) < 1e-9:
            up = np.array([0.0, 1.0, 0.0])
        right = _normalize(np.cross(forward, up))
        true_up = np.cross(right, forward)
        return cls(tuple(position.tolist()), tuple(right.tolist()), tuple(true_up.tolist()),
                   tuple(forward.tolist()), float(vertical_fov), float(near), float(far),
                   int(width), int(height))

    @property
    def tan_y(self) -> float:
        return math.tan(self.vertical_fov * 0.5)

    @property
    def tan_x(self) -> float:
        return self.tan_y * self.width / max(self.height, 1)

    @property
    def basis(self) -> np.ndarray:
        """Rows: right, up, forward."""
        return np.array([self.right, self.up, self.forward], dtype=np.float64)

    def ray_directions(self, xs, ys) -> np.ndarray:
        """Unit directions through pixel centers (``xs``, ``ys`` integer arrays)."""
        xs = np.asarray(xs, dtype=np.float64)
        ys = np.asarray(ys, dtype=np.float64)
        u = (2.0 * (xs + 0.5) / self.width - 1.0) * self.tan_x
        v = (1.0 - 2.0 * (ys + 0.5) / self.height) * self.tan_y
        d = (np.asarray(self.forward)[None, :] + u[:, None] * np.asarray(self.right)[None, :]
             + v[:, None] * np.asarray(self.up)[None, :])
        return d / np.linalg.norm(d, axis=1, keepdims=True)

    def to_view(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - np.asarray(self.position)) @ self.basis.T

    def slope_to_pixel(self, u, v) -> tuple:
        """Continuous pixel coordinates of view slopes (x/z, y/z)."""
        px = (np.asarray(u) / self.tan_x + 1.0) * 0.5 * self.width
        py = (1.0 - np.asarray(v) / self.tan_y) * 0.5 * self.height
        return px, py


@dataclass(eq=False)
class FrameBuffers:
    color: np.ndarray                 # (H, W, 3) in [0, 1]
    depth: np.ndarray                 # (H, W) forward depth in [near, far]
    camera: Camera
    prev_depth: Optional[np.ndarray] = None
    prev_camera: Optional[Camera] = None

    def __post_init__(self):
        if self.depth.shape != self.color.shape[:2]:
            raise ValueError("color and depth sizes differ")
        if self.prev_depth is not None and self.prev_depth.shape != self.depth.shape:
            raise ValueError("previous depth size differs from the frame")

    @property
    def width(self) -> int:
        return self.color.shape[1]

    @property
    def height(self) -> int:
        return self.color.shape[0]


@dataclass
class CullStats:
    total: int = 0
    frustum_culled: int = 0
    chunk_culled: int = 0      # packets removed at chunk level, by either test
    occlusion_culled: int = 0
    traced: int = 0
    rays: int = 0
    steps: int = 0

    @property
    def culled(self) -> int:
        return self.frustum_culled + self.occlusion_culled

    @property
    def average_steps(self) -> float:
        return self.steps / self.rays if self.rays else 0.0

    def to_line(self) -> str:
        return (f"total={self.total} frustum_culled={self.frustum_culled} "
                f"chunk_culled={self.chunk_culled} occlusion_culled={self.occlusion_culled} "
                f"culled={self.culled} traced={self.traced} rays={self.rays} "
                f"avg_steps={self.average_steps:.2f}")


@dataclass(frozen=True)
class RenderParams:
    materials: MaterialTable = field(default_factory=MaterialTable)
    light_dir: Vec3 = (0.4, -0.3, 0.85)
    ambient: float = 0.0
    sky_horizon: Vec3 = (0.80, 0.85, 0.90)
    sky_zenith: Vec3 = (0.35, 0.55, 0.85)
    hit_eps: float = 1e-3
    max_steps: int = 256
    step_constant: float = 3.0
    tile_size: int = 16
    cull_frustum: bool = True
    cull_chunk: bool = True
    cull_occlusion: bool = True
    lod_pixels: float = 0.0     # > 0: noise octaves finer than this many pixels are dropped

    def without_culling(self) -> "RenderParams":
        return replace(self, cull_frustum=False, cull_chunk=False, cull_occlusion=False)

    def lod_footprint(self, camera: Camera) -> float:
        """World size of ``lod_pixels`` pixels per unit of ray distance; 0 when off."""
        if self.lod_pixels <= 0.0 or camera.height == 0:
            return 0.0
        return self.lod_pixels * 2.0 * camera.tan_y / camera.height


class Scene:
    """Packets and chunks plus the arrays the tracer reads."""

    def __init__(self, packets: Sequence[RenderPacket], chunks: Sequence[Chunk] = (),
                 templates: Optional[TemplateTable] = None):
        self.packets = list(packets)
        self.chunks = list(chunks)
        self.templates = templates or TemplateTable()

    def __len__(self):
        return len(self.packets)

    @cached_property
    def arrays(self) -> PacketArrays:
        return PacketArrays.from_packets(self.packets, scene_ground_heights(self.packets, self.chunks))

    @cached_property
    def influence_radius(self) -> np.ndarray:
        """Bounding radius grown by the widest blend: where a packet can change the field."""
        return self.arrays.bounding_radius + self.templates.max_blend_k

    @cached_property
    def blend_k(self) -> np.ndarray:
        return class_blend_k(self.templates)[self.arrays.category]

    def step_scale(self, step_constant: float = 3.0) -> float:
        """Smallest class step factor over the classes present."""
        if not self.packets:
            return 1.0
        return min(step_scale(self.templates[c], step_constant)
                   for c in np.unique(self.arrays.category))
