"""Lambert + Blinn-Phong shading and the sky background."""
import numpy as np

from apps.packets.materials import MaterialTable
from apps.sdf.models import SdfSample

ROUGHNESS_EPS = 1e-4


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.where(norm > 0.0, norm, 1.0)


def shininess(roughness):
    """Blinn-Phong exponent, clamped at 0."""
    exponent = 2.0 / (np.asarray(roughness, dtype=np.float64) ** 4 + ROUGHNESS_EPS) - 2.0
    return np.maximum(exponent, 0.0)


def shade_many(albedo, diffuse, specular, roughness, normal, view_dir, light_dir,
               ambient: float = 0.0) -> np.ndarray:
    """Vectorised shading; ``view_dir`` points from the surface to the eye."""
    n = np.asarray(normal, dtype=np.float64)
    v = np.asarray(view_dir, dtype=np.float64)
    light = np.broadcast_to(_unit(light_dir), n.shape)
    half = _unit(light + v)
    base = np.asarray(albedo, dtype=np.float64) * np.asarray(diffuse, dtype=np.float64)
    n_dot_l = np.maximum((n * light).sum(axis=-1), 0.0)
    n_dot_h = np.maximum((n * half).sum(axis=-1), 0.0)
    n_dot_h, exponent = np.broadcast_arrays(n_dot_h, shininess(roughness))
    lobe = np.zeros(n_dot_h.shape)
    lit = n_dot_h > 0.0
    lobe[lit] = n_dot_h[lit] ** exponent[lit]
    highlight = np.asarray(specular, dtype=np.float64) * lobe
    color = base * (n_dot_l[..., None] + ambient) + highlight[..., None]
    return np.clip(color, 0.0, 1.0)


def shade(sample: SdfSample, normal, view_dir, light_dir, materials: MaterialTable,
          ambient: float = 0.0) -> tuple[float, float, float]:
    material = materials[sample.material_id]
    rgb = shade_many(sample.albedo, material.diffuse, material.specular, material.roughness,
                     normal, view_dir, light_dir, ambient)
    return tuple(float(c) for c in rgb)


def sky(dirs: np.ndarray, horizon, zenith) -> np.ndarray:
    """Background by ray elevation: horizon colour at and below 0, zenith straight up."""
    elevation = np.clip(np.asarray(dirs, dtype=np.float64)[..., 2], 0.0, 1.0)[..., None]
    horizon = np.asarray(horizon, dtype=np.float64)
    return horizon + (np.asarray(zenith, dtype=np.float64) - horizon) * elevation
