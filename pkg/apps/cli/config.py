"""
Effective pipeline configuration.

Three layers, later wins: ``settings.POINTAMP`` defaults, a flat
``key=value`` file (``--config``), command-line flags. ``dump()`` writes the
same format ``load`` reads, so a dumped file reproduces a run exactly.
"""
from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Union

from django.conf import settings
from dotenv import dotenv_values

from apps.ingest.classmaps import CLASS_MAPS
from apps.packets.materials import MaterialTable
from apps.packets.services import GROUND_TEMPLATES
from apps.render.models import Camera, RenderParams

Vec3 = tuple[float, float, float]
IMAGE_FORMATS = ("ppm", "png")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RenderConfig:
    # ingest / build
    class_map: str = "dales"
    ground_as: str = "ground"
    low_veg_as_grass: bool = False
    low_veg_height: float = 0.5
    cell_size: float = 0.0
    chunk_factor: int = 8
    radius_max: float = 3.0
    global_seed: int = 0x5EED
    templates: str = ""
    ortho: str = ""
    threads: int = 0

    # camera
    width: int = 640
    height: int = 360
    vertical_fov_deg: float = 60.0
    near: float = 0.1
    far: float = 500.0
    camera_position: Vec3 = (0.0, -20.0, 10.0)
    camera_look_at: Vec3 = (0.0, 0.0, 0.0)

    # shading
    light_dir: Vec3 = (0.4, -0.3, 0.85)
    ambient: float = 0.0
    sky_horizon: Vec3 = (0.80, 0.85, 0.90)
    sky_zenith: Vec3 = (0.35, 0.55, 0.85)

    # tracing
    hit_eps: float = 1e-3
    max_steps: int = 256
    step_constant: float = 3.0
    tile_size: int = 16
    lod_pixels: float = 0.0

    # culling
    cull_frustum: bool = True
    cull_chunk: bool = True
    cull_occlusion: bool = True

    # output
    frames: int = 1
    fps: float = 0.0
    image_format: str = "ppm"
    stats: bool = False

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ConfigError(f"resolution must be positive, got {self.width}x{self.height}")
        if self.class_map not in CLASS_MAPS:
            raise ConfigError(f"unknown class map {self.class_map!r}")
        if self.ground_as not in GROUND_TEMPLATES:
            raise ConfigError(f"ground_as must be one of {sorted(GROUND_TEMPLATES)}")
        if self.cell_size < 0:
            raise ConfigError(f"cell_size must be >= 0, got {self.cell_size}")
        if self.chunk_factor < 1:
            raise ConfigError(f"chunk_factor must be >= 1, got {self.chunk_factor}")
        if not self.radius_max > 0:
            raise ConfigError(f"radius_max must be positive, got {self.radius_max}")
        if self.threads < 0:
            raise ConfigError(f"threads must be >= 0, got {self.threads}")
        if self.tile_size < 1 or self.max_steps < 1:
            raise ConfigError("tile_size and max_steps must be >= 1")
        if not 0 <= self.global_seed < 2 ** 64:
            raise ConfigError(f"global_seed {self.global_seed} is not a u64")
        if self.lod_pixels < 0:
            raise ConfigError(f"lod_pixels must be >= 0, got {self.lod_pixels}")
        if self.frames < 1:
            raise ConfigError(f"frames must be >= 1, got {self.frames}")
        if self.fps < 0:
            raise ConfigError(f"fps must be >= 0, got {self.fps}")
        if self.image_format not in IMAGE_FORMATS:
            raise ConfigError(f"image_format must be one of {list(IMAGE_FORMATS)}")

    # ─── Layers ──────────────────────────────────────────────────────────

    @classmethod
    def from_settings(cls) -> "RenderConfig":
        values = {k.lower(): v for k, v in settings.POINTAMP.items()}
        values["threads"] = settings.POINTAMP_THREADS
        known = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: _coerce(k, v) for k, v in values.items() if k in known})

    def updated(self, values: Mapping[str, Any]) -> "RenderConfig":
        """Copy with non-``None`` values applied."""
        changes = {k: v for k, v in values.items() if v is not None}
        unknown = set(changes) - set(_PARSERS)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        try:
            return dataclasses.replace(self, **changes)
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from None

    def with_file(self, path: Union[str, Path]) -> "RenderConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} not found")
        return self.updated(parse_config(dotenv_values(path), source=str(path)))

    def dump(self) -> str:
        return "".join(f"{f.name}={_format(getattr(self, f.name))}\n"
                       for f in dataclasses.fields(self))

    # ─── Derived objects ─────────────────────────────────────────────────

    @property
    def workers(self) -> int:
        return self.threads or os.cpu_count() or 1

    def camera(self, position: Optional[Vec3] = None, look_at: Optional[Vec3] = None) -> Camera:
        return Camera.look_at(
            position if position is not None else self.camera_position,
            look_at if look_at is not None else self.camera_look_at,
            vertical_fov=math.radians(self.vertical_fov_deg),
            near=self.near, far=self.far, width=self.width, height=self.height,
        )

    def render_params(self, materials: Optional[MaterialTable] = None) -> RenderParams:
        return RenderParams(
            materials=materials or MaterialTable(),
            light_dir=self.light_dir, ambient=self.ambient,
            sky_horizon=self.sky_horizon, sky_zenith=self.sky_zenith,
            hit_eps=self.hit_eps, max_steps=self.max_steps,
            step_constant=self.step_constant, tile_size=self.tile_size,
            cull_frustum=self.cull_frustum, cull_chunk=self.cull_chunk,
            cull_occlusion=self.cull_occlusion,
            lod_pixels=self.lod_pixels,
        )


# ─── Parsing ─────────────────────────────────────────────────────────────────

def parse_bool(raw: str) -> bool:
    value = str(raw).strip().lower()
    if value in {"1", "true", "yes", "on"}:
        return True
    if value in {"0", "false", "no", "off"}:
        return False
    raise ValueError(f"{raw!r} is not a boolean")


def parse_vec3(raw: str) -> Vec3:
    parts = [p for p in str(raw).replace(" ", "").split(",") if p]
    if len(parts) != 3:
        raise ValueError(f"{raw!r} is not an x,y,z triple")
    return tuple(float(p) for p in parts)


def parse_int(raw: str) -> int:
    return int(str(raw).strip(), 0)


_KIND_PARSERS: dict[str, Callable[[str], Any]] = {
    "str": str, "bool": parse_bool, "float": float, "int": parse_int, "Vec3": parse_vec3,
}
_PARSERS = {f.name: _KIND_PARSERS[f.type] for f in dataclasses.fields(RenderConfig)}


def _coerce(key: str, value: Any) -> Any:
    if isinstance(value, str) and _PARSERS[key] is not str:
        return _PARSERS[key](value)
    if _PARSERS[key] is parse_vec3:
        return tuple(float(c) for c in value)
    return value


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(repr(float(c)) for c in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config(values: Mapping[str, Optional[str]], source: str = "config") -> dict[str, Any]:
    out = {}
    for key, raw in values.items():
        name = key.strip().lower()
        if name not in _PARSERS:
            raise ConfigError(f"{source}: unknown key {key!r}")
        if raw is None:
            raise ConfigError(f"{source}: key {key!r} has no value")
        try:
            out[name] = _PARSERS[name](raw)
        except ValueError as e:
            raise ConfigError(f"{source}: {key}: {e}") from None
    return out


def load_config(path: Union[str, Path, None] = None,
                overrides: Optional[Mapping[str, Any]] = None) -> RenderConfig:
    """Settings defaults, then ``path``, then ``overrides``."""
    config = RenderConfig.from_settings()
    if path:
        config = config.with_file(path)
    if overrides:
        config = config.updated(overrides)
    return config


# ─── Command-line flags ──────────────────────────────────────────────────────

def add_config_arguments(parser, build: bool = True, render: bool = True) -> None:
    """Flags shared by the pipeline commands. Defaults come from settings."""
    parser.add_argument("--config", help="key=value file applied over the settings defaults")
    parser.add_argument("--dump-config", metavar="PATH",
                        help="write the effective configuration to PATH")
    parser.add_argument("--threads", type=int, help="worker threads (0 = all cores)")
    parser.add_argument("--seed", dest="global_seed", type=parse_int, help="global seed")
    parser.add_argument("--templates", help="templates.cfg with class template overrides")
    if build:
        parser.add_argument("--class-map", dest="class_map", help="class code scheme (dales, asprs)")
        parser.add_argument("--ground-as", dest="ground_as", choices=sorted(GROUND_TEMPLATES),
                            help="template used for ground returns")
        parser.add_argument("--low-veg-as-grass", dest="low_veg_as_grass", action="store_const",
                            const=True, help="reclassify low vegetation as grass")
        parser.add_argument("--low-veg-height", dest="low_veg_height", type=float,
                            help="height above ground below which vegetation counts as low (m)")
        parser.add_argument("--cell-size", dest="cell_size", type=float,
                            help="grid cell size in meters (0 = estimate)")
        parser.add_argument("--chunk-factor", dest="chunk_factor", type=int,
                            help="cells per chunk edge")
        parser.add_argument("--radius-max", dest="radius_max", type=float,
                            help="adjacency search radius in meters")
        parser.add_argument("--ortho", help="PPM ortho-image with a .wld world file beside it")
    if render:
        parser.add_argument("--width", type=int)
        parser.add_argument("--height", type=int)
        parser.add_argument("--fov", dest="vertical_fov_deg", type=float, help="vertical fov, degrees")
        parser.add_argument("--near", type=float)
        parser.add_argument("--far", type=float)
        parser.add_argument("--camera", dest="camera_position", type=parse_vec3, metavar="X,Y,Z")
        parser.add_argument("--look-at", dest="camera_look_at", type=parse_vec3, metavar="X,Y,Z")
        parser.add_argument("--light-dir", dest="light_dir", type=parse_vec3, metavar="X,Y,Z")
        parser.add_argument("--ambient", type=float)
        parser.add_argument("--sky-horizon", dest="sky_horizon", type=parse_vec3, metavar="R,G,B")
        parser.add_argument("--sky-zenith", dest="sky_zenith", type=parse_vec3, metavar="R,G,B")
        parser.add_argument("--hit-eps", dest="hit_eps", type=float)
        parser.add_argument("--max-steps", dest="max_steps", type=int)
        parser.add_argument("--step-constant", dest="step_constant", type=float)
        parser.add_argument("--tile-size", dest="tile_size", type=int)
        parser.add_argument("--lod-pixels", dest="lod_pixels", type=float,
                            help="drop noise octaves finer than this many pixels (0 = off)")
        parser.add_argument("--stats", action="store_const", const=True,
                            help="print cull statistics")
        parser.add_argument("--no-cull", action="store_true", help="disable all culling (reference mode)")
        parser.add_argument("--no-frustum-cull", dest="cull_frustum", action="store_const", const=False)
        parser.add_argument("--no-chunk-cull", dest="cull_chunk", action="store_const", const=False)
        parser.add_argument("--no-occlusion-cull", dest="cull_occlusion", action="store_const",
                            const=False)


def config_from_options(options: Mapping[str, Any]) -> RenderConfig:
    overrides = {k: v for k, v in options.items() if k in _PARSERS}
    if options.get("no_cull"):
        overrides.update(cull_frustum=False, cull_chunk=False, cull_occlusion=False)
    config = load_config(options.get("config"), overrides)
    if options.get("dump_config"):
        Path(options["dump_config"]).write_text(config.dump(), encoding="utf-8")
    return config
