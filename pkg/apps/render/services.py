"""
Frame rendering.

Two phases. The culling pass walks chunks, then packets, in index order and
bins every surviving packet's screen quad into 16x16 pixel tiles. The
tracing pass renders tiles independently on a thread pool; each tile owns
its slice of the frame buffers, so the result does not depend on the worker
count or on completion order.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np

from .culling import (
    FRUSTUM, HiZPyramid, PreviousView, cull_chunk, occlusion_test, project_quad,
)
from .models import Camera, CullStats, FrameBuffers, RenderParams, Scene
from .shading import shade_many, sky
from .tracer import trace_rays

logger = logging.getLogger(__name__)


class ViewportError(ValueError):
    pass


def _previous_view(camera: Camera, prev: Optional[FrameBuffers]) -> Optional[PreviousView]:
    if prev is None:
        return None
    if prev.depth.shape != (camera.height, camera.width):
        logger.debug("previous frame size differs; occlusion culling skipped")
        return None
    return PreviousView(prev.camera, HiZPyramid(prev.depth))


def cull_and_bin(scene: Scene, camera: Camera, params: RenderParams,
                 prev: Optional[FrameBuffers] = None) -> tuple[list[list[int]], CullStats]:
    """Culling pass: per-tile ascending packet lists plus counters."""
    stats = CullStats(total=len(scene))
    ts = params.tile_size
    tiles_x = math.ceil(camera.width / ts)
    tiles_y = math.ceil(camera.height / ts)
    bins: list[list[int]] = [[] for _ in range(tiles_x * tiles_y)]
    if not len(scene):
        return bins, stats

    pad = scene.templates.max_blend_k
    margin = 2.0 * params.hit_eps
    previous = _previous_view(camera, prev) if params.cull_occlusion else None

    alive = np.ones(len(scene), dtype=bool)
    if params.cull_chunk:
        for chunk in scene.chunks:
            decision = cull_chunk(camera, chunk, previous, pad, margin)
            if decision.keep:
                continue
            members = list(chunk.packet_indices)
            alive[members] = False
            stats.chunk_culled += len(members)
            if decision.reason == FRUSTUM:
                stats.frustum_culled += len(members)
            else:
                stats.occlusion_culled += len(members)

    centers = scene.arrays.centers
    radii = scene.influence_radius
    for i in np.flatnonzero(alive).tolist():
        rect = project_quad(camera, centers[i], float(radii[i]), frustum=params.cull_frustum)
        if rect is None:
            if params.cull_frustum:
                stats.frustum_culled += 1
            else:
                stats.traced += 1
            continue
        if previous is not None and occlusion_test(previous, centers[i], float(radii[i]), margin):
            stats.occlusion_culled += 1
            continue
        stats.traced += 1
        for ty in range(rect.y0 // ts, (rect.y1 - 1) // ts + 1):
            row = ty * tiles_x
            for tx in range(rect.x0 // ts, (rect.x1 - 1) // ts + 1):
                bins[row + tx].append(i)
    return bins, stats


def render_frame(scene: Scene, camera: Camera, params: Optional[RenderParams] = None,
                 prev: Optional[FrameBuffers] = None,
                 workers: int = 1) -> tuple[FrameBuffers, CullStats]:
    """Render one frame; ``prev`` enables reprojection occlusion culling."""
    params = params or RenderParams()
    if camera.width == 0 or camera.height == 0:
        raise ViewportError(f"zero-size viewport {camera.width}x{camera.height}")

    bins, stats = cull_and_bin(scene, camera, params, prev)

    w, h, ts = camera.width, camera.height, params.tile_size
    tiles_x = math.ceil(w / ts)
    color = np.empty((h, w, 3))
    depth = np.full((h, w), camera.far)
    steps = np.zeros((h, w), dtype=np.int64)
    step_scale = scene.step_scale(params.step_constant)
    lod_footprint = params.lod_footprint(camera)
    scene.blend_k  # computed once, before the workers start
    diffuse, specular, roughness = params.materials.arrays()
    forward = np.asarray(camera.forward)
    origin = np.asarray(camera.position)

    def render_tile(tile: int) -> None:
        x0, y0 = (tile % tiles_x) * ts, (tile // tiles_x) * ts
        x1, y1 = min(x0 + ts, w), min(y0 + ts, h)
        ys, xs = np.mgrid[y0:y1, x0:x1]
        dirs = camera.ray_directions(xs.ravel(), ys.ravel())
        batch = trace_rays(scene, origin, dirs, bins[tile], camera.near, camera.far,
                           params.hit_eps, params.max_steps, step_scale, lod_footprint)

        rgb = sky(dirs, params.sky_horizon, params.sky_zenith)
        z = np.full(len(dirs), camera.far)
        hit = np.flatnonzero(batch.hit)
        if len(hit):
            packet = batch.packet[hit]
            material = scene.arrays.material_id[packet]
            rgb[hit] = shade_many(scene.arrays.albedo[packet], diffuse[material],
                                  specular[material], roughness[material],
                                  batch.normal[hit], -dirs[hit], params.light_dir, params.ambient)
            z[hit] = np.clip(batch.t[hit] * (dirs[hit] * forward).sum(axis=1), camera.near, camera.far)
        color[y0:y1, x0:x1] = rgb.reshape(y1 - y0, x1 - x0, 3)
        depth[y0:y1, x0:x1] = z.reshape(y1 - y0, x1 - x0)
        steps[y0:y1, x0:x1] = batch.steps.reshape(y1 - y0, x1 - x0)

    tiles = range(len(bins))
    if workers <= 1:
        for tile in tiles:
            render_tile(tile)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(render_tile, tiles))

    stats.rays = w * h
    stats.steps = int(steps.sum())
    logger.debug("frame %dx%d: %s", w, h, stats.to_line())
    matching = prev is not None and prev.depth.shape == depth.shape
    fb = FrameBuffers(color=color, depth=depth, camera=camera,
                      prev_depth=prev.depth if matching else None,
                      prev_camera=prev.camera if matching else None)
    return fb, stats
