"""
Class templates: how one render packet becomes a local distance field.

Templates come in four kinds, keyed by canonical class:

* star     capsules from the packet center to the midpoint of every
           adjacency offset (a sphere when isolated); Vegetation, Fence,
           Vehicle, Pole, PowerLine
* box      a cube of half-extent ``capsule_radius`` joined to its neighbours
           by the same half-offset capsules; Building
* surface  a bounded slab ("puck") whose top follows the local ground height,
           displaced by tapered noise; Ground, Grass, Road
* bump     a hemisphere resting on the packet center; Unknown

Primitives inside a packet are blended with ``smooth_min_nearest``. Every
kind except ``surface`` subtracts ``noise_amplitude * fbm`` from the distance.

Evaluation is vectorised: ``evaluate`` takes M (packet, point) pairs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from apps.ingest.models import CanonicalClass as C
from apps.packets.models import MAX_ADJACENCY, RenderPacket
from .models import SdfSample, TemplateParams, TemplateTable
from .noise import fbm_noise, fbm_slope_bound
from .primitives import length, sd_box, sd_capsule, smooth_min_nearest

STAR = "star"
BOX = "box"
SURFACE = "surface"
BUMP = "bump"

KIND = {
    C.VEGETATION: STAR,
    C.FENCE: STAR,
    C.VEHICLE: STAR,
    C.POLE: STAR,
    C.POWER_LINE: STAR,
    C.BUILDING: BOX,
    C.GROUND: SURFACE,
    C.GRASS: SURFACE,
    C.ROAD: SURFACE,
    C.UNKNOWN: BUMP,
}

# Grass noise lattice is squashed vertically so features read as upright blades.
_GRASS_STRETCH = np.array([1.0, 1.0, 0.25])


@dataclass(frozen=True, eq=False)
class PacketArrays:
    """Structure-of-arrays view of a packet list (N packets)."""

    centers: np.ndarray          # (N, 3)
    offsets: np.ndarray          # (N, 8, 3), zero past ``degree``
    degree: np.ndarray           # (N,)
    category: np.ndarray         # (N,) uint8
    material_id: np.ndarray      # (N,)
    albedo: np.ndarray           # (N, 3)
    bounding_radius: np.ndarray  # (N,)
    seed: np.ndarray             # (N,) uint64
    ground_height: np.ndarray    # (N,)

    def __len__(self):
        return len(self.centers)

    @classmethod
    def from_packets(cls, packets: Sequence[RenderPacket],
                     ground_heights: Optional[Sequence[float]] = None) -> "PacketArrays":
        n = len(packets)
        offsets = np.zeros((n, MAX_ADJACENCY, 3), dtype=np.float64)
        degree = np.zeros(n, dtype=np.int64)
        for i, packet in enumerate(packets):
            if packet.adjacency:
                offsets[i, :len(packet.adjacency)] = packet.adjacency
                degree[i] = len(packet.adjacency)
        centers = np.array([p.center for p in packets], dtype=np.float64).reshape(n, 3)
        if ground_heights is None:
            ground = centers[:, 2].copy()
        else:
            ground = np.asarray(ground_heights, dtype=np.float64)
            if ground.shape != (n,):
                raise ValueError(f"expected {n} ground heights, got {ground.shape}")
        return cls(
            centers=centers,
            offsets=offsets,
            degree=degree,
            category=np.array([int(p.category) for p in packets], dtype=np.uint8),
            material_id=np.array([p.material_id for p in packets], dtype=np.int64),
            albedo=np.array([p.albedo for p in packets], dtype=np.float64).reshape(n, 3),
            bounding_radius=np.array([p.bounding_radius for p in packets], dtype=np.float64),
            seed=np.array([p.seed for p in packets], dtype=np.uint64),
            ground_height=ground,
        )


# ─── Bounds ──────────────────────────────────────────────────────────────────

def base_radius(category, params: TemplateParams) -> float:
    """Radius of the template's own body around the packet center."""
    r = params.capsule_radius
    kind = KIND[C(category)]
    if kind == BOX:
        return r * math.sqrt(3.0)
    if kind == SURFACE:
        return r * math.sqrt(2.0)
    return r


def bounding_radius(category, offsets, ground_offset: float,
                    params: TemplateParams) -> float:
    """Radius outside which the packet's field is strictly positive.

    ``offsets`` are the adjacency vectors; ``ground_offset`` is
    ``ground_height - center.z`` (only surfaces use it).
    """
    kind = KIND[C(category)]
    r = params.capsule_radius
    a = params.noise_amplitude
    if kind == SURFACE:
        return r * math.sqrt(2.0) + a + abs(ground_offset)
    if kind == BUMP:
        return r + a

    extent = base_radius(category, params)
    lengths = [math.sqrt(sum(c * c for c in o)) for o in offsets]
    if lengths:
        extent = max(extent, max(ln * 0.5 + r for ln in lengths))
    primitives = len(lengths) + (1 if kind == BOX else 0)
    if primitives > 1:
        extent += params.blend_k * 0.25
    return extent + a


def lipschitz_bound(params: TemplateParams) -> float:
    """Provable Lipschitz constant of a noised template field."""
    if params.noise_amplitude == 0.0:
        return 1.0
    slope = fbm_slope_bound(params.noise_frequency, params.octaves)
    if params.height > 0.0:
        slope += params.taper / params.height
    return 1.0 + params.noise_amplitude * slope


def step_scale(params: TemplateParams, step_constant: float = 3.0) -> float:
    """Sphere-tracing step factor for a class."""
    return 1.0 / (1.0 + params.noise_amplitude * params.noise_frequency * step_constant)


# ─── Evaluation ──────────────────────────────────────────────────────────────

def lod_octaves(params: TemplateParams, footprint) -> np.ndarray:
    """Octaves whose wavelength is at least ``footprint`` (world size of a pixel), at least one."""
    fp = np.asarray(footprint, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        finest = np.floor(np.log2(1.0 / (params.noise_frequency * fp))) + 1.0
    finest = np.nan_to_num(finest, nan=params.octaves, posinf=params.octaves, neginf=1.0)
    return np.clip(finest, 1, params.octaves).astype(np.int64)


def _noise(seeds, p, params: TemplateParams, footprint=None):
    if params.noise_amplitude == 0.0:
        return 0.0
    octaves = params.octaves if footprint is None else lod_octaves(params, footprint)
    return params.noise_amplitude * fbm_noise(seeds, p, params.noise_frequency, octaves)


def _capsules(arrays: PacketArrays, idx: np.ndarray, p: np.ndarray, r: float,
              min_slots: int) -> np.ndarray:
    """(M, S) half-offset capsule distances, +inf on unused slots."""
    degree = arrays.degree[idx]
    slots = max(min_slots, int(degree.max()) if len(degree) else 0)
    if slots == 0:
        return np.zeros((len(idx), 0))
    c = arrays.centers[idx][:, None, :]
    b = c + arrays.offsets[idx, :slots] * 0.5
    d = sd_capsule(p[:, None, :], c, b, r)
    used = np.arange(slots)[None, :] < np.maximum(degree, min_slots)[:, None]
    return np.where(used, d, np.inf)


def _star(arrays, idx, p, params: TemplateParams, footprint=None):
    d = _capsules(arrays, idx, p, params.capsule_radius, min_slots=1)
    return smooth_min_nearest(d, params.blend_k) - _noise(arrays.seed[idx], p, params, footprint)


def _box(arrays, idx, p, params: TemplateParams, footprint=None):
    body = sd_box(p, arrays.centers[idx], params.capsule_radius)
    arms = _capsules(arrays, idx, p, params.capsule_radius, min_slots=0)
    d = np.concatenate([body[:, None], arms], axis=1)
    return smooth_min_nearest(d, params.blend_k) - _noise(arrays.seed[idx], p, params, footprint)


def _surface(arrays, idx, p, params: TemplateParams, category: C, footprint=None):
    r = params.capsule_radius
    c = arrays.centers[idx]
    gh = arrays.ground_height[idx]
    above = p[:, 2] - gh
    top = above
    if params.noise_amplitude > 0.0:
        weight = 1.0
        if params.height > 0.0:
            weight = 1.0 - params.taper * np.clip(above / params.height, 0.0, 1.0)
        q = p * _GRASS_STRETCH if category == C.GRASS else p
        top = above - weight * _noise(arrays.seed[idx], q, params, footprint)
    side = length(p[:, :2] - c[:, :2]) - r
    floor = (gh - r) - p[:, 2]
    return np.maximum(np.maximum(top, side), floor)


def _bump(arrays, idx, p, params: TemplateParams, footprint=None):
    c = arrays.centers[idx]
    d = np.maximum(length(p - c) - params.capsule_radius, c[:, 2] - p[:, 2])
    return d - _noise(arrays.seed[idx], p, params, footprint)


def evaluate_class(arrays: PacketArrays, table: TemplateTable, category,
                   idx: np.ndarray, p: np.ndarray, footprint=None) -> np.ndarray:
    """Distances for pairs whose packets all share ``category``."""
    category = C(category)
    params = table[category]
    kind = KIND[category]
    if kind == STAR:
        return _star(arrays, idx, p, params, footprint)
    if kind == BOX:
        return _box(arrays, idx, p, params, footprint)
    if kind == SURFACE:
        return _surface(arrays, idx, p, params, category, footprint)
    return _bump(arrays, idx, p, params, footprint)


def evaluate(arrays: PacketArrays, table: TemplateTable, idx, p, footprint=None) -> np.ndarray:
    """Packet field at M (packet index, point) pairs; ``p`` is (M, 3).

    ``footprint`` (M,) is the world size of a pixel at each point. When given,
    noise octaves finer than it are dropped.
    """
    idx = np.asarray(idx, dtype=np.int64)
    p = np.asarray(p, dtype=np.float64).reshape(len(idx), 3)
    out = np.empty(len(idx), dtype=np.float64)
    categories = arrays.category[idx]
    if footprint is not None:
        footprint = np.broadcast_to(np.asarray(footprint, dtype=np.float64), idx.shape)
    for category in np.unique(categories):
        sel = np.flatnonzero(categories == category)
        fp = None if footprint is None else footprint[sel]
        out[sel] = evaluate_class(arrays, table, category, idx[sel], p[sel], fp)
    return out


def packet_sdf(packet: RenderPacket, table: TemplateTable, ground_height: float,
               p) -> SdfSample:
    """Distance and material of a single packet at point ``p``."""
    arrays = PacketArrays.from_packets([packet], [ground_height])
    d = evaluate(arrays, table, [0], np.asarray(p, dtype=np.float64)[None, :])
    return SdfSample(distance=float(d[0]), material_id=packet.material_id,
                     albedo=tuple(packet.albedo))
