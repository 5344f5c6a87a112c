"""
SDF primitives and blending operators.

All functions accept numpy arrays and broadcast over leading batch
dimensions; a point array has shape ``(..., 3)`` and distances ``(...,)``.
"""
from __future__ import annotations

import numpy as np
import numpy.typing as npt

_F = npt.NDArray[np.floating]


def length(v: _F) -> _F:
    return np.sqrt(np.sum(v * v, axis=-1))


def sd_sphere(p: _F, center: _F, r: float) -> _F:
    return length(np.asarray(p) - center) - r


def sd_capsule(p: _F, a: _F, b: _F, r) -> _F:
    """Capsule with axis segment a-b and radius r; a == b gives a sphere."""
    p, a, b = np.asarray(p, dtype=np.float64), np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    pa = p - a
    ba = b - a
    bb = np.sum(ba * ba, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        h = np.where(bb > 0.0, np.sum(pa * ba, axis=-1) / np.where(bb > 0.0, bb, 1.0), 0.0)
    h = np.clip(h, 0.0, 1.0)
    return length(pa - ba * h[..., None]) - r


def sd_box(p: _F, center: _F, half: float) -> _F:
    """Axis-aligned cube of half-extent ``half``."""
    q = np.abs(np.asarray(p) - center) - half
    return length(np.maximum(q, 0.0)) + np.minimum(np.max(q, axis=-1), 0.0)


def smooth_min(d1, d2, k):
    """Polynomial smooth minimum; ``k == 0`` is the plain minimum.

    h = max(k - |d1 - d2|, 0) / k;  result = min(d1, d2) - h^2 k / 4
    """
    d1 = np.asarray(d1, dtype=np.float64)
    d2 = np.asarray(d2, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        gap = np.abs(d1 - d2)
        h = np.where(k > 0.0, np.maximum(k - gap, 0.0) / np.where(k > 0.0, k, 1.0), 0.0)
        h = np.where(np.isfinite(gap), h, 0.0)
    out = np.minimum(d1, d2) - h * h * k * 0.25
    return float(out) if out.ndim == 0 else out


def smooth_min_nearest(d: _F, k) -> _F:
    """Blend the two smallest entries along the last axis.

    Unlike a sequential fold this is order independent and stays within
    k/4 of the plain minimum.
    """
    d = np.asarray(d, dtype=np.float64)
    if d.shape[-1] == 1:
        return d[..., 0]
    two = np.partition(d, 1, axis=-1)[..., :2]
    return smooth_min(two[..., 0], two[..., 1], k)
