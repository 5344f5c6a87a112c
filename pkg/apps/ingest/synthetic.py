"""
Seeded synthetic LiDAR tiles, so tests and demos never need a downloaded
dataset. All scenes use DALES class codes and ~1 m point spacing.
"""
import math

import numpy as np

from .models import RawPoint

# DALES codes
GROUND, VEGETATION, VEHICLE, POWER_LINE, FENCE, POLE, BUILDING = 1, 2, 3, 5, 6, 7, 8


def _to_points(xyz: np.ndarray, codes: np.ndarray) -> list[RawPoint]:
    return [
        RawPoint(float(x), float(y), float(z), int(c))
        for (x, y, z), c in zip(xyz.tolist(), codes.tolist())
    ]


def _fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    phi = np.arccos(1.0 - 2.0 * i / n)
    theta = math.pi * (1.0 + 5.0 ** 0.5) * i
    return np.stack(
        [np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=1
    )


def terrain_height(x, y):
    return 0.6 * np.sin(x / 17.0) * np.cos(y / 23.0)


def tree(rng: np.random.Generator, base: np.ndarray) -> np.ndarray:
    """Trunk column plus a roughly spherical crown, ~1 m spacing."""
    trunk_h = rng.uniform(1.5, 3.0)
    trunk = np.array([[0.0, 0.0, z] for z in np.arange(0.5, trunk_h, 1.0)])
    radius = rng.uniform(1.5, 3.0)
    n_shell = max(8, int(4.0 * math.pi * radius * radius))
    shell = _fibonacci_sphere(n_shell) * radius
    core = _fibonacci_sphere(max(4, n_shell // 4)) * (radius * 0.5)
    crown = np.vstack([shell, core]) + [0.0, 0.0, trunk_h + radius]
    pts = np.vstack([trunk, crown]) if len(trunk) else crown
    return pts + base


def building(rng: np.random.Generator, corner: np.ndarray) -> np.ndarray:
    """Box shell (roof + four walls) sampled on a 1 m lattice."""
    sx, sy = rng.integers(6, 14, size=2)
    h = int(rng.integers(4, 10))
    xs, ys = np.arange(sx + 1.0), np.arange(sy + 1.0)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    roof = np.stack([gx.ravel(), gy.ravel(), np.full(gx.size, float(h))], axis=1)
    walls = []
    for z in np.arange(0.0, h, 1.0):
        for x in xs:
            walls.append((x, 0.0, z))
            walls.append((x, float(sy), z))
        for y in ys[1:-1]:
            walls.append((0.0, y, z))
            walls.append((float(sx), y, z))
    return np.vstack([roof, np.array(walls)]) + corner


def generate_tile(n_points: int = 100_000, seed: int = 0) -> list[RawPoint]:
    """DALES-like tile: rolling ground, trees, buildings, poles with a wire, cars.

    The result holds approximately ``n_points`` points (ground fills the
    remainder of the budget after the objects are placed).
    """
    rng = np.random.default_rng(seed)
    side = max(8.0, math.sqrt(n_points * 0.6))
    chunks, codes = [], []

    def add(xyz, code):
        xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
        chunks.append(xyz)
        codes.append(np.full(len(xyz), code, dtype=np.uint8))

    n_buildings = max(1, int(n_points * 0.15 / 400))
    for _ in range(n_buildings):
        corner = rng.uniform(0.0, side - 15.0, size=2)
        base = float(terrain_height(corner[0], corner[1]))
        add(building(rng, np.array([corner[0], corner[1], base])), BUILDING)

    n_trees = max(1, int(n_points * 0.25 / 60))
    for _ in range(n_trees):
        xy = rng.uniform(0.0, side, size=2)
        base = np.array([xy[0], xy[1], float(terrain_height(xy[0], xy[1]))])
        add(tree(rng, base), VEGETATION)

    # a row of poles carrying one wire
    y_line = side * 0.5
    pole_xs = np.arange(2.0, side - 2.0, 25.0)
    for px in pole_xs:
        ground = float(terrain_height(px, y_line))
        add([(px, y_line, ground + z) for z in np.arange(0.5, 9.0, 1.0)], POLE)
    if len(pole_xs) > 1:
        wx = np.arange(pole_xs[0], pole_xs[-1], 1.0)
        add(np.stack([wx, np.full(len(wx), y_line), 9.0 + 0.2 * np.cos(wx / 4.0)], axis=1),
            POWER_LINE)

    for _ in range(max(1, n_points // 20_000)):
        xy = rng.uniform(0.0, side - 4.0, size=2)
        gx, gy = np.meshgrid(np.arange(0.0, 4.0), np.arange(0.0, 2.0), indexing="ij")
        base = float(terrain_height(xy[0], xy[1]))
        add(np.stack([gx.ravel() + xy[0], gy.ravel() + xy[1],
                      np.full(gx.size, base + 1.2)], axis=1), VEHICLE)

    used = sum(len(c) for c in chunks)
    n_ground = max(1, n_points - used)
    gxy = rng.uniform(0.0, side, size=(n_ground, 2))
    gz = terrain_height(gxy[:, 0], gxy[:, 1]) + rng.normal(0.0, 0.02, n_ground)
    add(np.column_stack([gxy, gz]), GROUND)

    return _to_points(np.vstack(chunks), np.concatenate(codes))


def generate_cluster(spacing: float = 1.0, height: float = 2.0) -> list[RawPoint]:
    """Five vegetation points: a center with four neighbours at ``spacing``."""
    s = spacing
    xyz = np.array([
        [0.0, 0.0, height],
        [s, 0.0, height],
        [-s, 0.0, height],
        [0.0, 0.0, height + s],
        [0.0, 0.0, height - s],
    ])
    return _to_points(xyz, np.full(5, VEGETATION))


def generate_wall(width: float = 24.0, height: float = 14.0, depth_behind: float = 5.0,
                  seed: int = 0) -> list[RawPoint]:
    """A building wall in the plane y=0 with a grove of vegetation behind it (y>0)."""
    rng = np.random.default_rng(seed)
    xs = np.arange(-width / 2, width / 2 + 0.5, 1.0)
    zs = np.arange(-height / 2, height / 2 + 0.5, 1.0)
    gx, gz = np.meshgrid(xs, zs, indexing="ij")
    wall = np.stack([gx.ravel(), np.zeros(gx.size), gz.ravel()], axis=1)

    n_behind = 200
    behind = np.column_stack([
        rng.uniform(-width / 3, width / 3, n_behind),
        rng.uniform(depth_behind, depth_behind + 6.0, n_behind),
        rng.uniform(-height / 3, height / 3, n_behind),
    ])
    return _to_points(np.vstack([wall, behind]),
                      np.concatenate([np.full(len(wall), BUILDING),
                                      np.full(n_behind, VEGETATION)]))
