"""
Seeded 3D value noise and its fractal sum.

Lattice values come from a splitmix64 integer hash of (seed, ix, iy, iz),
so results do not depend on platform RNGs. Interpolation is trilinear with
smoothstep weights. Octave o is weighted 2^-o at frequency * 2^o and the sum
is normalised by the total weight, keeping fbm in [-1, 1].
"""
import math

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_PX = np.uint64(0x8DA6B343)
_PY = np.uint64(0xD8163841)
_PZ = np.uint64(0xCB1AB31F)
_S30, _S27, _S31, _S11 = np.uint64(30), np.uint64(27), np.uint64(31), np.uint64(11)


def splitmix64(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.uint64)
    z = x.reshape(-1) + _GOLDEN
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return (z ^ (z >> _S31)).reshape(x.shape)


_MASK = 0xFFFFFFFFFFFFFFFF


def _as_u64(values: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(values, dtype=np.int64).reshape(-1).view(np.uint64)


def _u64_column(part) -> np.ndarray:
    if isinstance(part, (int, np.integer)):
        return np.array([int(part) & _MASK], dtype=np.uint64)
    return _as_u64(np.asarray(part))


def mix_seeds(*columns) -> np.ndarray:
    """Fold integer columns (scalars broadcast) into u64 seeds, row by row."""
    cols = [_u64_column(c) for c in columns]
    acc = np.zeros(max(len(c) for c in cols), dtype=np.uint64)
    for col in cols:
        acc = splitmix64(acc ^ col)
    return acc


def mix_seed(*parts) -> int:
    """Fold integers into one u64 seed."""
    return int(mix_seeds(*parts)[0])


def lattice_value(seed, ix, iy, iz) -> np.ndarray:
    """Hashed lattice value in [-1, 1)."""
    seed, ix, iy, iz = np.broadcast_arrays(
        np.asarray(seed, dtype=np.uint64), np.asarray(ix, dtype=np.int64),
        np.asarray(iy, dtype=np.int64), np.asarray(iz, dtype=np.int64),
    )
    shape = ix.shape
    key = (np.ascontiguousarray(seed).reshape(-1)
           ^ (_as_u64(ix) * _PX) ^ (_as_u64(iy) * _PY) ^ (_as_u64(iz) * _PZ))
    h = splitmix64(splitmix64(key))
    return ((h >> _S11).astype(np.float64) * (2.0 / 9007199254740992.0) - 1.0).reshape(shape)


def _smoothstep(t):
    return t * t * (3.0 - 2.0 * t)


def value_noise(seed, p: np.ndarray) -> np.ndarray:
    """Single-octave value noise at points ``p`` (..., 3); per-point seeds broadcast."""
    p = np.asarray(p, dtype=np.float64)
    cell = np.floor(p)
    f = p - cell
    i = cell.astype(np.int64)
    u = _smoothstep(f)
    seed = np.asarray(seed, dtype=np.uint64)
    ix, iy, iz = i[..., 0], i[..., 1], i[..., 2]
    ux, uy, uz = u[..., 0], u[..., 1], u[..., 2]

    def v(dx, dy, dz):
        return lattice_value(seed, ix + dx, iy + dy, iz + dz)

    x00 = v(0, 0, 0) + ux * (v(1, 0, 0) - v(0, 0, 0))
    x10 = v(0, 1, 0) + ux * (v(1, 1, 0) - v(0, 1, 0))
    x01 = v(0, 0, 1) + ux * (v(1, 0, 1) - v(0, 0, 1))
    x11 = v(0, 1, 1) + ux * (v(1, 1, 1) - v(0, 1, 1))
    y0 = x00 + uy * (x10 - x00)
    y1 = x01 + uy * (x11 - x01)
    return y0 + uz * (y1 - y0)


def fbm_noise(seed, p, frequency: float = 1.0, octaves=1) -> np.ndarray:
    """Fractal value noise in [-1, 1]; ``seed`` may be a scalar or per-point array.

    ``octaves`` is a count or a per-point array of counts; each point is
    normalised by the weights of its own octaves.
    """
    counts = np.asarray(octaves, dtype=np.int64)
    if counts.size == 0 or counts.min() < 1:
        raise ValueError(f"octaves must be >= 1, got {octaves}")
    p = np.asarray(p, dtype=np.float64)
    seed = np.asarray(seed, dtype=np.uint64)
    total = np.zeros(p.shape[:-1], dtype=np.float64)
    weight_sum = np.zeros(p.shape[:-1], dtype=np.float64)
    for o in range(int(counts.max())):
        weight = np.where(counts > o, 0.5 ** o, 0.0)
        octave_seed = seed ^ np.uint64(mix_seed(0x0C7A7E, o))
        total = total + weight * value_noise(octave_seed, p * (frequency * 2.0 ** o))
        weight_sum = weight_sum + weight
    return np.clip(total / weight_sum, -1.0, 1.0)


def fbm_slope_bound(frequency: float, octaves: int) -> float:
    """Upper bound on |grad fbm|.

    Per octave: weight * frequency = base frequency; each value-noise octave
    has slope <= 3 per axis (lattice step 2 times max smoothstep slope 1.5).
    """
    weight_sum = sum(0.5 ** o for o in range(octaves))
    return 3.0 * math.sqrt(3.0) * frequency * octaves / weight_sum
