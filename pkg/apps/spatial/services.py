"""
Grid construction and exact queries.

k-NN searches cell shells outward from the query cell and stops once the
nearest possible point of the next shell is farther than both the current
k-th best and ``radius_max``. Ties are broken by ascending point index, so
results equal a brute-force search with the same rule.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from apps.ingest.classmaps import map_classes
from apps.ingest.models import GROUND_FAMILY, RawPoint, class_codes, positions
from .models import Cell, Chunk, GridIndex

logger = logging.getLogger(__name__)

MAX_NEIGHBOURS = 8


class GridError(ValueError):
    pass


def _split(n: int, workers: int) -> list[tuple[int, int]]:
    workers = max(1, min(workers, n))
    bounds = np.linspace(0, n, workers + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _cells(xyz: np.ndarray, origin: np.ndarray, cell_size: float) -> np.ndarray:
    return np.floor((xyz - origin) / cell_size).astype(np.int64)


def build_grid(points: Sequence[RawPoint], cell_size: float, chunk_factor: int = 8,
               classes: Optional[np.ndarray] = None, scheme: str = "dales",
               workers: int = 1) -> GridIndex:
    """Bucket ``points``; ``classes`` (CanonicalClass values) default to ``scheme``."""
    if not points:
        raise GridError("cannot index an empty point list")
    if not cell_size > 0:
        raise GridError(f"cell_size must be positive, got {cell_size}")
    if chunk_factor < 1:
        raise GridError(f"chunk_factor must be >= 1, got {chunk_factor}")

    xyz = positions(points)
    origin = xyz.min(axis=0)
    if classes is None:
        classes = map_classes(class_codes(points), scheme)
    classes = np.asarray(classes, dtype=np.uint8)
    if len(classes) != len(xyz):
        raise GridError("classes and points differ in length")

    parts = _split(len(xyz), workers)
    if len(parts) == 1:
        cells = _cells(xyz, origin, cell_size)
    else:
        with ThreadPoolExecutor(max_workers=len(parts)) as pool:
            pieces = pool.map(lambda ab: _cells(xyz[ab[0]:ab[1]], origin, cell_size), parts)
            cells = np.concatenate(list(pieces))

    order = np.lexsort((np.arange(len(cells)), cells[:, 2], cells[:, 1], cells[:, 0]))
    sorted_cells = cells[order]
    breaks = np.flatnonzero(np.any(np.diff(sorted_cells, axis=0) != 0, axis=1)) + 1
    buckets: dict[Cell, np.ndarray] = {}
    for members in np.split(order, breaks):
        key = tuple(int(c) for c in cells[members[0]])
        buckets[key] = members

    logger.info("grid: %d points, %d buckets, cell %.3f m", len(xyz), len(buckets), cell_size)
    return GridIndex(
        cell_size=float(cell_size), origin=origin, buckets=buckets, points=points,
        chunk_factor=int(chunk_factor), positions=xyz, classes=classes, cells=cells,
    )


def estimate_cell_size(xyz: np.ndarray, sample: int = 1000, block: int = 8) -> float:
    """2x the median nearest-neighbour spacing of a deterministic sample."""
    n = len(xyz)
    if n < 2:
        return 1.0
    picks = np.unique(np.linspace(0, n - 1, min(n, sample)).astype(np.int64))
    nearest = []
    for start in range(0, len(picks), block):
        rows = picks[start:start + block]
        d2 = ((xyz[None, :, :] - xyz[rows][:, None, :]) ** 2).sum(axis=2)
        d2[np.arange(len(rows)), rows] = np.inf
        nearest.append(d2.min(axis=1))
    spacing = np.sqrt(np.concatenate(nearest))
    spacing = spacing[spacing > 0]
    if not len(spacing):
        return 1.0
    size = 2.0 * float(np.median(spacing))
    logger.info("estimated cell size %.3f m from %d samples", size, len(picks))
    return size


@lru_cache(maxsize=64)
def _shell_offsets(s: int) -> np.ndarray:
    """Integer offsets at Chebyshev distance exactly ``s``."""
    r = np.arange(-s, s + 1)
    grid = np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3)
    return grid[np.abs(grid).max(axis=1) == s]


@lru_cache(maxsize=64)
def _block_offsets(s: int) -> np.ndarray:
    r = np.arange(-s, s + 1)
    return np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3)


def _gather(index: GridIndex, center, offsets: np.ndarray) -> np.ndarray:
    found = []
    cx, cy, cz = (int(c) for c in center)
    buckets = index.buckets
    for dx, dy, dz in offsets.tolist():
        members = buckets.get((cx + dx, cy + dy, cz + dz))
        if members is not None:
            found.append(members)
    if not found:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate(found)


def _gather_occupied(index: GridIndex, mask: np.ndarray) -> np.ndarray:
    picked = np.flatnonzero(mask)
    if not len(picked):
        return np.zeros(0, dtype=np.int64)
    members = index.bucket_members
    return np.concatenate([members[i] for i in picked.tolist()])


def _gather_ring(index: GridIndex, center, inner: int, outer: int) -> np.ndarray:
    """Members of buckets at Chebyshev cell distance ``inner..outer`` from ``center``.

    Looks up cell keys while the ring holds no more cells than there are
    buckets, otherwise filters the occupied cells; work is bounded by both.
    """
    volume = (2 * outer + 1) ** 3 - max(2 * inner - 1, 0) ** 3
    if volume <= len(index.buckets):
        offsets = _shell_offsets(outer) if inner == outer else _block_offsets(outer)
        if 0 < inner < outer:
            offsets = offsets[np.abs(offsets).max(axis=1) >= inner]
        return _gather(index, center, offsets)
    ring = np.abs(index.cell_keys - np.asarray(center, dtype=np.int64)).max(axis=1)
    return _gather_occupied(index, (ring >= inner) & (ring <= outer))


def _select(cand: np.ndarray, d2: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    order = np.lexsort((cand, d2))[:k]
    return cand[order], d2[order]


def _check_query(index: GridIndex, query_idx: int, k: int, radius_max: float):
    if not 0 <= query_idx < len(index):
        raise GridError(f"query index {query_idx} out of range for {len(index)} points")
    if not 1 <= k <= MAX_NEIGHBOURS:
        raise GridError(f"k must be in 1..{MAX_NEIGHBOURS}, got {k}")
    if not radius_max > 0:
        raise GridError(f"radius_max must be positive, got {radius_max}")


def knn_same_class(index: GridIndex, query_idx: int, k: int = MAX_NEIGHBOURS,
                   radius_max: float = 3.0) -> list[int]:
    """Up to ``k`` nearest same-class points within ``radius_max``, query excluded."""
    _check_query(index, query_idx, k, radius_max)
    cs = index.cell_size
    q = index.positions[query_idx]
    qc = index.cells[query_idx]
    cls = index.classes[query_idx]
    r2max = radius_max * radius_max

    lo = index.origin + qc * cs
    face = float(min((q - lo).min(), (lo + cs - q).min()))
    face = max(0.0, face - 1e-9 * max(1.0, cs))
    max_shell = int(math.ceil(radius_max / cs)) + 1

    best = np.zeros(0, dtype=np.int64)
    best_d2 = np.zeros(0, dtype=np.float64)
    for s in range(max_shell + 1):
        if s > 0:
            bound = (s - 1) * cs + face
            if bound * bound > r2max:
                break
            if len(best) == k and bound * bound > best_d2[-1]:
                break
        cand = _gather_ring(index, qc, s, s)
        if not len(cand):
            continue
        cand = cand[(index.classes[cand] == cls) & (cand != query_idx)]
        d2 = ((index.positions[cand] - q) ** 2).sum(axis=1)
        keep = d2 <= r2max
        best, best_d2 = _select(np.concatenate([best, cand[keep]]),
                                np.concatenate([best_d2, d2[keep]]), k)
    return best.tolist()


def knn_all(index: GridIndex, k: int = MAX_NEIGHBOURS, radius_max: float = 3.0,
            workers: int = 1) -> list[list[int]]:
    """``knn_same_class`` for every point, batched per occupied cell."""
    if not 1 <= k <= MAX_NEIGHBOURS:
        raise GridError(f"k must be in 1..{MAX_NEIGHBOURS}, got {k}")
    if not radius_max > 0:
        raise GridError(f"radius_max must be positive, got {radius_max}")
    reach = int(math.ceil(radius_max / index.cell_size)) + 1
    r2max = radius_max * radius_max
    result: list[list[int]] = [[] for _ in range(len(index))]

    def run(cells: list[Cell]):
        for cell in cells:
            queries = index.buckets[cell]
            cand = _gather_ring(index, cell, 0, reach)
            for cls in np.unique(index.classes[queries]):
                qs = queries[index.classes[queries] == cls]
                cs_ = cand[index.classes[cand] == cls]
                d2 = ((index.positions[cs_][None, :, :]
                       - index.positions[qs][:, None, :]) ** 2).sum(axis=2)
                for row, q in enumerate(qs.tolist()):
                    keep = (d2[row] <= r2max) & (cs_ != q)
                    chosen, _ = _select(cs_[keep], d2[row][keep], k)
                    result[q] = chosen.tolist()

    cells = list(index.buckets)
    parts = _split(len(cells), workers)
    if len(parts) <= 1:
        run(cells)
    else:
        with ThreadPoolExecutor(max_workers=len(parts)) as pool:
            list(pool.map(lambda ab: run(cells[ab[0]:ab[1]]), parts))
    return result


def query_radius(index: GridIndex, position, radius: float) -> list[int]:
    """All point indices (any class) within ``radius`` of ``position``, ascending."""
    p = np.asarray(position, dtype=np.float64)
    lo = np.floor((p - radius - index.origin) / index.cell_size).astype(np.int64)
    hi = np.floor((p + radius - index.origin) / index.cell_size).astype(np.int64)
    if int(np.prod(hi - lo + 1)) > len(index.buckets):
        keys = index.cell_keys
        cand = _gather_occupied(index, np.all((keys >= lo) & (keys <= hi), axis=1))
    else:
        found = []
        for cx in range(lo[0], hi[0] + 1):
            for cy in range(lo[1], hi[1] + 1):
                for cz in range(lo[2], hi[2] + 1):
                    members = index.buckets.get((cx, cy, cz))
                    if members is not None:
                        found.append(members)
        cand = np.concatenate(found) if found else np.zeros(0, dtype=np.int64)
    if not len(cand):
        return []
    d2 = ((index.positions[cand] - p) ** 2).sum(axis=1)
    return sorted(cand[d2 <= radius * radius].tolist())


def chunk_groups(index: GridIndex) -> dict[Cell, np.ndarray]:
    """Chunk coordinate → ascending point indices, in ascending chunk order."""
    chunk_cells = index.cells // index.chunk_factor
    order = np.lexsort((np.arange(len(chunk_cells)),
                        chunk_cells[:, 2], chunk_cells[:, 1], chunk_cells[:, 0]))
    ordered = chunk_cells[order]
    breaks = np.flatnonzero(np.any(np.diff(ordered, axis=0) != 0, axis=1)) + 1
    return {
        tuple(int(c) for c in chunk_cells[members[0]]): members
        for members in np.split(order, breaks)
    }


def chunks(index: GridIndex, packets) -> list[Chunk]:
    """Group packets (packet i belongs to point i) into culling chunks."""
    if not packets:
        return []
    centers = np.array([p.center for p in packets], dtype=np.float64)
    radii = np.array([p.bounding_radius for p in packets], dtype=np.float64)
    out = []
    for coord, members in chunk_groups(index).items():
        c, r = centers[members], radii[members][:, None]
        lo = (c - r).min(axis=0)
        hi = (c + r).max(axis=0)
        mid = (lo + hi) * 0.5
        radius = max(
            float(np.linalg.norm(hi - lo)) * 0.5,
            float((np.linalg.norm(c - mid, axis=1) + radii[members]).max()),
        )
        out.append(Chunk(
            chunk_coord=coord,
            aabb_min=tuple(lo.tolist()),
            aabb_max=tuple(hi.tolist()),
            packet_indices=tuple(members.tolist()),
            sphere_center=tuple(mid.tolist()),
            sphere_radius=radius,
        ))
    return out


def nearest_ground_heights(xyz: np.ndarray, classes: np.ndarray,
                           groups) -> np.ndarray:
    """Per point: z of the horizontally nearest ground-family point in its group.

    Ground, Grass and Road all count as ground. Groups without one fall
    back to the global minimum z.
    ``groups`` is an iterable of ascending index arrays covering every point.
    """
    heights = np.full(len(xyz), float(xyz[:, 2].min()) if len(xyz) else 0.0)
    is_ground = np.isin(np.asarray(classes), [int(c) for c in GROUND_FAMILY])
    for members in groups:
        members = np.asarray(members, dtype=np.int64)
        ground = members[is_ground[members]]
        if not len(ground):
            continue
        for start in range(0, len(members), 1024):
            rows = members[start:start + 1024]
            d2 = ((xyz[rows][:, None, :2] - xyz[ground][None, :, :2]) ** 2).sum(axis=2)
            heights[rows] = xyz[ground[np.argmin(d2, axis=1)], 2]
    return heights
