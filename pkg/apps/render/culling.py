"""
Culling: frustum tests, screen quads, the HiZ pyramid and the occlusion test.

All tests are conservative with respect to pixel-center rays: anything a
primary ray can reach inside [near, far] is never culled.
"""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from apps.spatial.models import Chunk
from .models import Camera

FRUSTUM = "frustum"
OCCLUSION = "occlusion"


@dataclass(frozen=True)
class ScreenRect:
    """Pixel bounds ``[x0, x1) x [y0, y1)`` plus forward depth range."""

    x0: int
    y0: int
    x1: int
    y1: int
    z_near: float
    z_far: float

    @property
    def empty(self) -> bool:
        return self.x0 >= self.x1 or self.y0 >= self.y1


def in_frustum(camera: Camera, center, radius: float) -> bool:
    x, y, z = camera.to_view(center)
    if z + radius <= 0.0:
        return False
    if math.dist(center, camera.position) + radius < camera.near:
        return False
    if z - radius > camera.far:
        return False
    for slope, lateral in ((camera.tan_x, x), (camera.tan_y, y)):
        scale = math.sqrt(1.0 + slope * slope)
        if (slope * z - lateral) / scale < -radius or (slope * z + lateral) / scale < -radius:
            return False
    return True


def _slope_bounds(a: float, z: float, r: float) -> tuple[float, float]:
    """Range of a/z slopes of rays through a circle of radius r at (a, z); needs z > r."""
    root = r * math.sqrt(a * a + z * z - r * r)
    denom = z * z - r * r
    return (a * z - root) / denom, (a * z + root) / denom


def quad_bounds(camera: Camera, center, radius: float) -> tuple[float, float, float, float, float]:
    """Unclamped continuous pixel bounds (px0, py0, px1, py1) and view depth z.

    A sphere reaching the camera plane (z <= r) covers the whole viewport.
    """
    x, y, z = camera.to_view(center)
    if z <= radius:
        return -math.inf, -math.inf, math.inf, math.inf, float(z)
    u0, u1 = _slope_bounds(x, z, radius)
    v0, v1 = _slope_bounds(y, z, radius)
    px0, py1 = camera.slope_to_pixel(u0, v0)
    px1, py0 = camera.slope_to_pixel(u1, v1)
    return float(px0), float(py0), float(px1), float(py1), float(z)


def _clamp_rect(camera: Camera, px0, py0, px1, py1, z, radius) -> ScreenRect:
    def lo(v, limit):
        return 0 if v == -math.inf else int(min(max(math.floor(v) - 1, 0), limit))

    def hi(v, limit):
        return limit if v == math.inf else int(min(max(math.ceil(v) + 1, 0), limit))

    return ScreenRect(lo(px0, camera.width), lo(py0, camera.height),
                      hi(px1, camera.width), hi(py1, camera.height),
                      z - radius, z + radius)


def project_quad(camera: Camera, center, radius: float,
                 frustum: bool = True) -> Optional[ScreenRect]:
    """Screen rectangle covering the sphere, dilated one pixel and clamped.

    ``None`` when the sphere is outside the frustum (or, with ``frustum``
    off, when its rectangle misses the viewport).
    """
    if frustum and not in_frustum(camera, center, radius):
        return None
    rect = _clamp_rect(camera, *quad_bounds(camera, center, radius), radius)
    return None if rect.empty else rect


class HiZPyramid:
    """Max-depth mip chain; level 0 is the depth buffer itself."""

    def __init__(self, depth: np.ndarray):
        level = np.asarray(depth, dtype=np.float64)
        self.levels = [level]
        while level.shape[0] > 1 or level.shape[1] > 1:
            h, w = level.shape
            padded = np.pad(level, ((0, h % 2), (0, w % 2)), mode="edge")
            level = padded.reshape(padded.shape[0] // 2, 2, padded.shape[1] // 2, 2).max(axis=(1, 3))
            self.levels.append(level)

    @property
    def height(self) -> int:
        return self.levels[0].shape[0]

    @property
    def width(self) -> int:
        return self.levels[0].shape[1]

    def max_depth(self, x0: int, y0: int, x1: int, y1: int) -> float:
        """Max depth over pixels ``[x0, x1) x [y0, y1)`` read at the level where
        the rectangle spans at most 2x2 texels, dilated by one texel."""
        for lvl, level in enumerate(self.levels):
            tx0, tx1 = x0 >> lvl, (x1 - 1) >> lvl
            ty0, ty1 = y0 >> lvl, (y1 - 1) >> lvl
            if tx1 - tx0 <= 1 and ty1 - ty0 <= 1:
                h, w = level.shape
                block = level[max(ty0 - 1, 0):min(ty1 + 2, h), max(tx0 - 1, 0):min(tx1 + 2, w)]
                return float(block.max())
        return float(self.levels[-1].max())


@dataclass(frozen=True)
class PreviousView:
    camera: Camera
    hiz: HiZPyramid


def occlusion_test(prev: PreviousView, center, radius: float, margin: float = 2e-3) -> bool:
    """True when the sphere is hidden behind the previous frame's depth."""
    cam = prev.camera
    px0, py0, px1, py1, z = quad_bounds(cam, center, radius)
    if z - radius <= cam.near:
        return False
    if px0 < 0 or py0 < 0 or px1 > cam.width or py1 > cam.height:
        return False
    rect = _clamp_rect(cam, px0, py0, px1, py1, z, radius)
    if rect.empty:
        return False
    return z - radius > prev.hiz.max_depth(rect.x0, rect.y0, rect.x1, rect.y1) + margin


@dataclass(frozen=True)
class CullDecision:
    keep: bool
    reason: Optional[str] = None


def cull_chunk(camera: Camera, chunk: Chunk, prev: Optional[PreviousView] = None,
               pad: float = 0.0, margin: float = 2e-3) -> CullDecision:
    """Keep or cull a whole chunk; ``pad`` grows its sphere (widest blend)."""
    radius = chunk.sphere_radius + pad
    if not in_frustum(camera, chunk.sphere_center, radius):
        return CullDecision(False, FRUSTUM)
    if prev is not None and occlusion_test(prev, chunk.sphere_center, radius, margin):
        return CullDecision(False, OCCLUSION)
    return CullDecision(True)
