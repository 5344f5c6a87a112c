"""
Class → material table.

Material ids are the CanonicalClass values, so the table is always complete
and ``.pkt`` files need not carry it. Values are authoring choices and can be
overridden from ``templates.cfg`` (``<class>.diffuse=r,g,b``,
``<class>.specular``, ``<class>.roughness``, ``<class>.albedo=r,g,b``).
"""
from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Mapping, Optional, Union

import numpy as np
from dotenv import dotenv_values

from apps.ingest.models import CanonicalClass as C
from apps.sdf.models import MATERIAL_FIELDS, TemplateConfigError
from .models import RGB, Material

DEFAULT_MATERIALS: dict[C, Material] = {
    C.GROUND: Material((0.45, 0.36, 0.25), 0.02, 0.9),
    C.GRASS: Material((0.35, 0.55, 0.22), 0.03, 0.85),
    C.ROAD: Material((0.25, 0.25, 0.26), 0.1, 0.4),
    C.VEGETATION: Material((0.22, 0.45, 0.16), 0.05, 0.8),
    C.BUILDING: Material((0.78, 0.77, 0.75), 0.2, 0.6),
    C.POLE: Material((0.50, 0.48, 0.45), 0.2, 0.5),
    C.FENCE: Material((0.55, 0.45, 0.35), 0.05, 0.7),
    C.VEHICLE: Material((0.60, 0.10, 0.10), 0.5, 0.3),
    C.POWER_LINE: Material((0.15, 0.15, 0.15), 0.3, 0.4),
    C.UNKNOWN: Material((0.60, 0.60, 0.60), 0.05, 0.7),
}

# Albedo used when no ortho-image is given; the material supplies the tint.
NEUTRAL_ALBEDO: RGB = (1.0, 1.0, 1.0)


class MaterialTable:

    def __init__(self, materials: Optional[Mapping[C, Material]] = None,
                 albedo: Optional[Mapping[C, RGB]] = None):
        self._materials = dict(DEFAULT_MATERIALS)
        if materials:
            self._materials.update({C(k): v for k, v in materials.items()})
        self._albedo = {c: NEUTRAL_ALBEDO for c in C}
        if albedo:
            self._albedo.update({C(k): tuple(v) for k, v in albedo.items()})

    def __eq__(self, other):
        return (isinstance(other, MaterialTable)
                and self._materials == other._materials and self._albedo == other._albedo)

    def __getitem__(self, material_id: int) -> Material:
        return self._materials[C(material_id)]

    def __len__(self):
        return len(C)

    @staticmethod
    def material_id(category) -> int:
        return int(C(category))

    def default_albedo(self, category) -> RGB:
        return self._albedo[C(category)]

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(diffuse (K, 3), specular (K,), roughness (K,)) indexed by material id."""
        ordered = [self._materials[c] for c in C]
        return (
            np.array([m.diffuse for m in ordered], dtype=np.float64),
            np.array([m.specular for m in ordered], dtype=np.float64),
            np.array([m.roughness for m in ordered], dtype=np.float64),
        )


def _triple(key: str, raw: Optional[str]) -> RGB:
    try:
        parts = tuple(float(v) for v in (raw or "").split(","))
    except ValueError:
        raise TemplateConfigError(f"{key}: {raw!r} is not an r,g,b triple") from None
    if len(parts) != 3:
        raise TemplateConfigError(f"{key}: {raw!r} is not an r,g,b triple")
    return parts


def parse_material_config(values: Mapping[str, Optional[str]]) -> MaterialTable:
    """Material overrides from flat ``<class>.<field>`` pairs; other keys are ignored."""
    changes: dict[C, dict] = {}
    albedo: dict[C, RGB] = {}
    for key, raw in values.items():
        name, _, field_name = key.partition(".")
        if field_name not in MATERIAL_FIELDS:
            continue
        try:
            category = C.from_label(name)
        except ValueError as e:
            raise TemplateConfigError(str(e)) from None
        if field_name == "albedo":
            albedo[category] = _triple(key, raw)
        elif field_name == "diffuse":
            changes.setdefault(category, {})["diffuse"] = _triple(key, raw)
        else:
            try:
                changes.setdefault(category, {})[field_name] = float(raw)
            except (TypeError, ValueError):
                raise TemplateConfigError(f"{key}: {raw!r} is not a number") from None

    materials = {}
    for category, fields in changes.items():
        try:
            materials[category] = dataclasses.replace(DEFAULT_MATERIALS[category], **fields)
        except ValueError as e:
            raise TemplateConfigError(f"{category.label}: {e}") from None
    for category, rgb in albedo.items():
        if not all(0.0 <= c <= 1.0 for c in rgb):
            raise TemplateConfigError(f"{category.label}.albedo {rgb} outside the unit interval")
    return MaterialTable(materials, albedo)


def load_materials(path: Union[str, Path, None]) -> MaterialTable:
    if not path:
        return MaterialTable()
    path = Path(path)
    if not path.exists():
        raise TemplateConfigError(f"template config {path} not found")
    return parse_material_config(dotenv_values(path))
