"""
Packet construction: points + grid → render packets.

Stored quantities are rounded once here to what the ``.pkt`` file carries
(offsets and bounding radius as float32, albedo as 8-bit), so a packet read
back from disk equals the packet that was built.
"""
import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np

from apps.ingest.models import CanonicalClass, OrthoImage, RawPoint
from apps.ingest.ortho import sample_albedo_many
from apps.sdf.models import TemplateTable
from apps.sdf.noise import mix_seeds
from apps.sdf.templates import bounding_radius
from apps.spatial.models import GridIndex
from apps.spatial.services import (
    MAX_NEIGHBOURS, chunk_groups, knn_all, nearest_ground_heights,
)
from .materials import MaterialTable
from .models import RenderPacket

logger = logging.getLogger(__name__)

GROUND_TEMPLATES = {
    "ground": CanonicalClass.GROUND,
    "grass": CanonicalClass.GRASS,
    "road": CanonicalClass.ROAD,
}


# ─── Class policies ──────────────────────────────────────────────────────────

def apply_class_policies(index: GridIndex, ground_as: str = "ground",
                         low_veg_as_grass: bool = False,
                         low_veg_height: float = 0.5) -> GridIndex:
    """Return ``index`` with reclassified points.

    Low vegetation becomes Grass first (height measured against the
    unmodified ground), then Ground is sent to the ``ground_as`` template.
    """
    if ground_as not in GROUND_TEMPLATES:
        raise ValueError(f"ground_as must be one of {sorted(GROUND_TEMPLATES)}, got {ground_as!r}")
    classes = index.classes.copy()

    if low_veg_as_grass:
        heights = nearest_ground_heights(index.positions, classes, chunk_groups(index).values())
        low = ((classes == CanonicalClass.VEGETATION)
               & (index.positions[:, 2] - heights < low_veg_height))
        classes[low] = CanonicalClass.GRASS
        logger.info("reclassified %d low vegetation points as grass", int(low.sum()))

    target = GROUND_TEMPLATES[ground_as]
    if target != CanonicalClass.GROUND:
        classes[classes == CanonicalClass.GROUND] = target

    if np.array_equal(classes, index.classes):
        return index
    return dataclasses.replace(index, classes=classes)


# ─── Build ───────────────────────────────────────────────────────────────────

def quantize_albedo(rgb: np.ndarray) -> np.ndarray:
    """Round to the nearest 8-bit level (half up)."""
    return np.floor(np.clip(rgb, 0.0, 1.0) * 255.0 + 0.5) / 255.0


def round_up_f32(value: float) -> float:
    """Smallest float32 not below ``value``."""
    f = np.float32(value)
    if float(f) < value:
        f = np.nextafter(f, np.float32(np.inf))
    return float(f)


def packet_seeds(xyz: np.ndarray, global_seed: int) -> np.ndarray:
    """Per-point seeds from the global seed and the center quantised to 1 mm."""
    mm = np.floor(np.asarray(xyz, dtype=np.float64) * 1000.0 + 0.5).astype(np.int64)
    return mix_seeds(global_seed, mm[:, 0], mm[:, 1], mm[:, 2])


def _split(n: int, workers: int) -> list[tuple[int, int]]:
    workers = max(1, min(workers, n))
    bounds = np.linspace(0, n, workers + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def build_packets(points: Sequence[RawPoint], index: GridIndex,
                  ortho: Optional[OrthoImage] = None, global_seed: int = 0,
                  radius_max: float = 3.0, templates: Optional[TemplateTable] = None,
                  materials: Optional[MaterialTable] = None,
                  workers: int = 1) -> list[RenderPacket]:
    """One packet per point, in point order."""
    if len(points) != len(index):
        raise ValueError(f"index covers {len(index)} points, got {len(points)}")
    if not points:
        return []
    templates = templates or TemplateTable()
    materials = materials or MaterialTable()

    xyz = index.positions
    classes = index.classes
    neighbours = knn_all(index, MAX_NEIGHBOURS, radius_max, workers)
    ground = nearest_ground_heights(xyz, classes, chunk_groups(index).values())
    seeds = packet_seeds(xyz, global_seed)
    if ortho is not None:
        albedo = quantize_albedo(sample_albedo_many(ortho, xyz[:, 0], xyz[:, 1]))
    else:
        albedo = quantize_albedo(np.array(
            [materials.default_albedo(c) for c in classes], dtype=np.float64).reshape(-1, 3))

    def run(lo: int, hi: int) -> list[RenderPacket]:
        out = []
        for i in range(lo, hi):
            category = CanonicalClass(int(classes[i]))
            nbrs = neighbours[i]
            offsets = (xyz[nbrs] - xyz[i]).astype(np.float32).astype(np.float64)
            adjacency = tuple(tuple(o) for o in offsets.tolist())
            radius = bounding_radius(category, adjacency, float(ground[i] - xyz[i, 2]),
                                     templates[category])
            out.append(RenderPacket(
                center=tuple(xyz[i].tolist()),
                adjacency=adjacency,
                category=category,
                material_id=materials.material_id(category),
                albedo=tuple(albedo[i].tolist()),
                bounding_radius=round_up_f32(radius),
                seed=int(seeds[i]),
            ))
        return out

    parts = _split(len(points), workers)
    if len(parts) == 1:
        packets = run(*parts[0])
    else:
        with ThreadPoolExecutor(max_workers=len(parts)) as pool:
            packets = [p for part in pool.map(lambda ab: run(*ab), parts) for p in part]

    logger.info("built %d packets, mean degree %.2f", len(packets), mean_degree(packets))
    return packets


def mean_degree(packets: Sequence[RenderPacket]) -> float:
    if not packets:
        return 0.0
    return sum(p.degree for p in packets) / len(packets)


def degree_histogram(packets: Sequence[RenderPacket]) -> list[int]:
    """Count of packets per adjacency degree 0..8."""
    counts = [0] * (MAX_NEIGHBOURS + 1)
    for p in packets:
        counts[p.degree] += 1
    return counts


def class_histogram(categories) -> dict[CanonicalClass, int]:
    counts: dict[CanonicalClass, int] = {}
    for c in categories:
        c = CanonicalClass(int(c))
        counts[c] = counts.get(c, 0) + 1
    return dict(sorted(counts.items()))


def radius_percentiles(packets: Sequence[RenderPacket],
                       q: Sequence[float] = (0, 50, 90, 99, 100)) -> dict[float, float]:
    if not packets:
        return {}
    radii = np.array([p.bounding_radius for p in packets])
    return {float(k): float(v) for k, v in zip(q, np.percentile(radii, q))}
