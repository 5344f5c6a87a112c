"""
Batch sphere tracer.

A packet takes part in a ray's field only while the ray is inside the
packet's influence sphere, i.e. for t in [t0, t1] of the ray/sphere
intersection. Steps never cross the next entry point, and stretches with no
active packet are skipped in one jump. So the march depends only on the
packets a ray actually passes through, which is what makes culling exact.
"""
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from apps.sdf.models import SdfSample
from apps.sdf.scene import blend_nearest
from apps.sdf.templates import evaluate
from .models import Scene

GRADIENT_STEP = 1e-4


@dataclass
class TraceBatch:
    hit: np.ndarray        # (R,) bool
    t: np.ndarray          # (R,) ray distance, inf on miss
    packet: np.ndarray     # (R,) nearest contributor at the hit, -1 on miss
    normal: np.ndarray     # (R, 3)
    steps: np.ndarray      # (R,) loop iterations

    @classmethod
    def empty(cls, n: int) -> "TraceBatch":
        normal = np.zeros((n, 3))
        normal[:, 2] = 1.0
        return cls(np.zeros(n, dtype=bool), np.full(n, np.inf), np.full(n, -1, dtype=np.int64),
                   normal, np.zeros(n, dtype=np.int64))


@dataclass(frozen=True)
class Hit:
    t: float
    sample: SdfSample
    normal: tuple[float, float, float]


def sphere_intervals(origin, dirs: np.ndarray, centers: np.ndarray,
                     radii: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(t0, t1) of every ray/sphere pair; t0 = +inf, t1 = -inf when missing."""
    oc = np.asarray(origin, dtype=np.float64)[None, :] - centers
    b = (dirs[:, None, :] * oc[None, :, :]).sum(axis=2)
    c = (oc * oc).sum(axis=1) - radii * radii
    disc = b * b - c[None, :]
    ok = disc >= 0.0
    root = np.sqrt(np.where(ok, disc, 0.0))
    return np.where(ok, -b - root, np.inf), np.where(ok, -b + root, -np.inf)


def _field(scene: Scene, cand: np.ndarray, k: np.ndarray, active: np.ndarray,
           points: np.ndarray, footprint=None) -> tuple[np.ndarray, np.ndarray]:
    rows, cols = np.nonzero(active)
    d = np.full(active.shape, np.inf)
    fp = None if footprint is None else footprint[rows]
    d[rows, cols] = evaluate(scene.arrays, scene.templates, cand[cols], points[rows], fp)
    return blend_nearest(d, k)


def _normals(scene: Scene, cand, k, active, points, footprint=None) -> np.ndarray:
    g = np.zeros(points.shape)
    for axis in range(3):
        e = np.zeros(3)
        e[axis] = GRADIENT_STEP
        plus, _ = _field(scene, cand, k, active, points + e, footprint)
        minus, _ = _field(scene, cand, k, active, points - e, footprint)
        g[:, axis] = (plus - minus) / (2.0 * GRADIENT_STEP)
    norm = np.linalg.norm(g, axis=1, keepdims=True)
    safe = norm[:, 0] > 1e-12
    out = np.zeros_like(g)
    out[:, 2] = 1.0
    out[safe] = g[safe] / norm[safe]
    return out


def trace_rays(scene: Scene, origin, dirs: np.ndarray, candidates: Sequence[int],
               near: float, far: float, hit_eps: float = 1e-3, max_steps: int = 256,
               step_scale: float = 1.0, lod_footprint: float = 0.0) -> TraceBatch:
    """March ``dirs`` (unit, (R, 3)) from ``origin`` against ascending ``candidates``.

    ``lod_footprint`` > 0 is the world size of a pixel per unit of ray
    distance; noise octaves finer than that size at ``t`` are dropped.
    """
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    origin = np.asarray(origin, dtype=np.float64)
    out = TraceBatch.empty(len(dirs))
    cand = np.asarray(candidates, dtype=np.int64)
    if not len(cand) or not len(dirs):
        return out

    t0, t1 = sphere_intervals(origin, dirs, scene.arrays.centers[cand],
                              scene.influence_radius[cand])
    valid = (t1 >= near) & (t0 <= far)
    keep = valid.any(axis=0)
    cand, t0, t1, valid = cand[keep], t0[:, keep], t1[:, keep], valid[:, keep]
    t0 = np.where(valid, t0, np.inf)
    t1 = np.where(valid, t1, -np.inf)
    k = scene.blend_k[cand]

    live = np.flatnonzero(valid.any(axis=1))
    t = np.maximum(near, t0[live].min(axis=1))
    t_end = np.minimum(far, t1[live].max(axis=1))
    running = t <= t_end
    live, t, t_end = live[running], t[running], t_end[running]

    for _ in range(max_steps):
        if not len(live):
            break
        out.steps[live] += 1
        lt0, lt1 = t0[live], t1[live]
        active = (lt0 <= t[:, None]) & (lt1 >= t[:, None])
        upcoming = np.where(lt0 > t[:, None], lt0, np.inf).min(axis=1)
        has_active = active.any(axis=1)

        t_next = upcoming.copy()
        hit = np.zeros(len(live), dtype=bool)
        sel = np.flatnonzero(has_active)
        if len(sel):
            points = origin[None, :] + t[sel, None] * dirs[live[sel]]
            footprint = lod_footprint * t[sel] if lod_footprint > 0.0 else None
            dist, nearest = _field(scene, cand, k, active[sel], points, footprint)
            hit[sel] = dist < hit_eps
            t_next[sel] = np.minimum(t[sel] + step_scale * dist, upcoming[sel])

            done = sel[hit[sel]]
            if len(done):
                rays = live[done]
                out.hit[rays] = True
                out.t[rays] = t[done]
                out.packet[rays] = cand[nearest[hit[sel]]]
                out.normal[rays] = _normals(
                    scene, cand, k, active[done], points[hit[sel]],
                    None if footprint is None else footprint[hit[sel]])

        moving = ~hit & (t_next <= t_end)
        live, t, t_end = live[moving], t_next[moving], t_end[moving]
    return out


def trace_pixel(scene: Scene, origin, direction, candidates: Sequence[int],
                near: float, far: float, hit_eps: float = 1e-3, max_steps: int = 256,
                step_scale: Optional[float] = None, lod_footprint: float = 0.0) -> Optional[Hit]:
    """Trace one ray; ``None`` on a miss."""
    if step_scale is None:
        step_scale = scene.step_scale()
    batch = trace_rays(scene, origin, np.asarray(direction, dtype=np.float64)[None, :],
                       candidates, near, far, hit_eps, max_steps, step_scale, lod_footprint)
    if not batch.hit[0]:
        return None
    packet = scene.packets[int(batch.packet[0])]
    p = np.asarray(origin, dtype=np.float64) + batch.t[0] * np.asarray(direction, dtype=np.float64)
    cand = np.asarray(candidates, dtype=np.int64)
    inside = np.linalg.norm(scene.arrays.centers[cand] - p, axis=1) <= scene.influence_radius[cand]
    footprint = np.array([lod_footprint * batch.t[0]]) if lod_footprint > 0.0 else None
    dist, _ = _field(scene, cand, scene.blend_k[cand], inside[None, :], p[None, :], footprint)
    return Hit(
        t=float(batch.t[0]),
        sample=SdfSample(float(dist[0]), packet.material_id, tuple(packet.albedo)),
        normal=tuple(batch.normal[0].tolist()),
    )
