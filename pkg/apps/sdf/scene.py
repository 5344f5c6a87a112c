"""
Scene field: packets blended into one distance + material field.

Contributors are combined by the smooth minimum of the two nearest (order
independent; at most ``k/4`` below the plain minimum). A pair of different
classes blends with the smaller of their ``blend_k``. Material and albedo
come from the nearest contributor before blending, ties to the lower index.
"""
from typing import Callable, Optional, Sequence

import numpy as np

from apps.packets.models import RenderPacket
from apps.spatial.models import Chunk
from apps.spatial.services import nearest_ground_heights
from .models import FAR_DISTANCE, SdfSample, TemplateTable
from .primitives import smooth_min
from .templates import PacketArrays, evaluate


def scene_ground_heights(packets: Sequence[RenderPacket],
                         chunks: Optional[Sequence[Chunk]] = None) -> np.ndarray:
    """Ground reference per packet, searched within its chunk (all packets if no chunks)."""
    if not packets:
        return np.zeros(0)
    xyz = np.array([p.center for p in packets], dtype=np.float64)
    classes = np.array([int(p.category) for p in packets], dtype=np.uint8)
    if chunks:
        groups = [np.asarray(c.packet_indices, dtype=np.int64) for c in chunks]
    else:
        groups = [np.arange(len(packets))]
    return nearest_ground_heights(xyz, classes, groups)


def class_blend_k(table: TemplateTable) -> np.ndarray:
    """``blend_k`` indexed by CanonicalClass value."""
    return np.array([params.blend_k for _, params in table.items()], dtype=np.float64)


def blend_nearest(d: np.ndarray, k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Blend along the last axis; returns (distance, argmin column).

    ``k`` holds each column's blend radius (broadcast against ``d``).
    """
    d = np.asarray(d, dtype=np.float64)
    k = np.broadcast_to(np.asarray(k, dtype=np.float64), d.shape)
    nearest = np.argmin(d, axis=-1)
    if d.shape[-1] == 1:
        return d[..., 0], nearest
    two = np.argpartition(d, 1, axis=-1)[..., :2]
    d2 = np.take_along_axis(d, two, axis=-1)
    k2 = np.take_along_axis(k, two, axis=-1)
    blended = smooth_min(d2[..., 0], d2[..., 1], np.minimum(k2[..., 0], k2[..., 1]))
    return np.asarray(blended, dtype=np.float64), nearest


def scene_sdf(packets: Sequence[RenderPacket], table: TemplateTable, p,
              ground_heights: Optional[Sequence[float]] = None) -> SdfSample:
    """Field of a candidate set at ``p``; an empty set gives ``FAR_DISTANCE``."""
    if not packets:
        return SdfSample(FAR_DISTANCE, -1, (0.0, 0.0, 0.0))
    arrays = PacketArrays.from_packets(packets, ground_heights)
    n = len(packets)
    point = np.broadcast_to(np.asarray(p, dtype=np.float64), (n, 3))
    d = evaluate(arrays, table, np.arange(n), point)
    k = class_blend_k(table)[arrays.category]
    distance, nearest = blend_nearest(d, k)
    winner = packets[int(nearest)]
    return SdfSample(float(distance), winner.material_id, tuple(winner.albedo))


def sdf_gradient(field: Callable[[np.ndarray], float], p, h: float = 1e-4) -> np.ndarray:
    """Normalised central-difference gradient; +z when it vanishes."""
    if not h > 0:
        raise ValueError(f"h must be positive, got {h}")
    p = np.asarray(p, dtype=np.float64)
    g = np.empty(3)
    for axis in range(3):
        e = np.zeros(3)
        e[axis] = h
        g[axis] = (float(field(p + e)) - float(field(p - e))) / (2.0 * h)
    norm = float(np.linalg.norm(g))
    if norm > 1e-12:
        return g / norm
    return np.array([0.0, 0.0, 1.0])
