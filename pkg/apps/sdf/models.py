"""Template parameters and distance samples."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Union

from dotenv import dotenv_values

from apps.ingest.models import CanonicalClass as C

RGB = tuple[float, float, float]

# Large finite distance returned when nothing is near the point.
FAR_DISTANCE = 1e30

# Keys of templates.cfg that belong to the material table.
MATERIAL_FIELDS = frozenset({"diffuse", "specular", "roughness", "albedo"})


class TemplateConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SdfSample:
    distance: float
    material_id: int
    albedo: RGB


@dataclass(frozen=True)
class TemplateParams:
    """Shape parameters of one class template (lengths in meters)."""

    capsule_radius: float
    noise_amplitude: float = 0.0
    noise_frequency: float = 1.0
    octaves: int = 1
    taper: float = 0.0
    blend_k: float = 0.0
    height: float = 0.0     # grass taper height

    def __post_init__(self):
        if not self.capsule_radius > 0:
            raise TemplateConfigError(f"capsule_radius must be > 0, got {self.capsule_radius}")
        if not self.noise_amplitude >= 0:
            raise TemplateConfigError(f"noise_amplitude must be >= 0, got {self.noise_amplitude}")
        if not self.noise_frequency > 0:
            raise TemplateConfigError(f"noise_frequency must be > 0, got {self.noise_frequency}")
        if self.octaves < 1:
            raise TemplateConfigError(f"octaves must be >= 1, got {self.octaves}")
        if not 0.0 <= self.taper <= 1.0:
            raise TemplateConfigError(f"taper must be in [0, 1], got {self.taper}")
        if not self.blend_k >= 0:
            raise TemplateConfigError(f"blend_k must be >= 0, got {self.blend_k}")
        if not self.height >= 0:
            raise TemplateConfigError(f"height must be >= 0, got {self.height}")


DEFAULT_TEMPLATES: dict[C, TemplateParams] = {
    C.GROUND: TemplateParams(1.0, 0.04, 1.5, 2, 0.0, 0.3),
    C.GRASS: TemplateParams(1.0, 0.15, 6.0, 2, 1.0, 0.2, height=0.6),
    C.ROAD: TemplateParams(1.0, 0.0, 1.0, 1, 0.0, 0.1),
    C.VEGETATION: TemplateParams(0.35, 0.25, 2.0, 3, 0.0, 0.5),
    C.BUILDING: TemplateParams(0.5, 0.0, 1.0, 1, 0.0, 0.1),
    C.POLE: TemplateParams(0.06, 0.0, 1.0, 1, 0.0, 0.05),
    C.FENCE: TemplateParams(0.08, 0.0, 1.0, 1, 0.0, 0.05),
    C.VEHICLE: TemplateParams(0.6, 0.0, 1.0, 1, 0.0, 0.2),
    C.POWER_LINE: TemplateParams(0.06, 0.0, 1.0, 1, 0.0, 0.05),
    C.UNKNOWN: TemplateParams(0.25, 0.0, 1.0, 1, 0.0, 0.0),
}


class TemplateTable:
    """CanonicalClass → TemplateParams, complete over every class."""

    def __init__(self, params: Optional[Mapping[C, TemplateParams]] = None):
        merged = dict(DEFAULT_TEMPLATES)
        if params:
            merged.update({C(k): v for k, v in params.items()})
        self._params = merged

    def __getitem__(self, category) -> TemplateParams:
        return self._params[C(category)]

    def __eq__(self, other):
        return isinstance(other, TemplateTable) and self._params == other._params

    def items(self):
        return sorted(self._params.items())

    @property
    def max_blend_k(self) -> float:
        return max(p.blend_k for p in self._params.values())

    def replace(self, category, **changes) -> "TemplateTable":
        updated = dict(self._params)
        updated[C(category)] = dataclasses.replace(self._params[C(category)], **changes)
        return TemplateTable(updated)

    def to_config(self) -> dict[str, str]:
        out = {}
        for category, params in self.items():
            for f in dataclasses.fields(TemplateParams):
                out[f"{category.label}.{f.name}"] = repr(getattr(params, f.name))
        return out


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(TemplateParams)}


def parse_template_config(values: Mapping[str, Optional[str]]) -> TemplateTable:
    """Build a table from flat ``<class>.<field>=value`` pairs; unset fields keep defaults."""
    changes: dict[C, dict] = {}
    for key, raw in values.items():
        name, _, field_name = key.partition(".")
        if not field_name:
            raise TemplateConfigError(f"key {key!r} is not of the form <class>.<field>")
        if field_name in MATERIAL_FIELDS:
            continue
        try:
            category = C.from_label(name)
        except ValueError as e:
            raise TemplateConfigError(str(e)) from None
        if field_name not in _FIELD_TYPES:
            raise TemplateConfigError(f"unknown template field {field_name!r} in {key!r}")
        try:
            value = int(raw) if field_name == "octaves" else float(raw)
        except (TypeError, ValueError):
            raise TemplateConfigError(f"{key}: {raw!r} is not a number") from None
        if field_name != "octaves" and not math.isfinite(value):
            raise TemplateConfigError(f"{key}: {raw!r} is not finite")
        changes.setdefault(category, {})[field_name] = value

    table = TemplateTable()
    for category, fields in changes.items():
        table = table.replace(category, **fields)
    return table


def load_templates(path: Union[str, Path, None]) -> TemplateTable:
    """Read ``templates.cfg``; ``None`` or empty path gives the defaults."""
    if not path:
        return TemplateTable()
    path = Path(path)
    if not path.exists():
        raise TemplateConfigError(f"template config {path} not found")
    return parse_template_config(dotenv_values(path))
