"""
Vendor class code → CanonicalClass maps.

Maps are plain data (scheme name → {code: class}); codes missing from a table
map to UNKNOWN, so every scheme is total over 0-255.
"""
from typing import Mapping

import numpy as np

from .models import CanonicalClass as C


class UnknownSchemeError(ValueError):
    """Raised for a class-map name that was never registered."""


# DALES benchmark categories (0 is the unlabeled remainder).
DALES = {
    1: C.GROUND,
    2: C.VEGETATION,
    3: C.VEHICLE,       # cars
    4: C.VEHICLE,       # trucks
    5: C.POWER_LINE,
    6: C.FENCE,
    7: C.POLE,
    8: C.BUILDING,
}

# ASPRS / LAS 1.4 standard point classes.
ASPRS = {
    2: C.GROUND,
    3: C.GRASS,         # low vegetation
    4: C.VEGETATION,
    5: C.VEGETATION,
    6: C.BUILDING,
    9: C.GROUND,        # water
    11: C.ROAD,
    13: C.POWER_LINE,   # wire guard
    14: C.POWER_LINE,   # wire conductor
    15: C.POLE,         # transmission tower
    17: C.ROAD,         # bridge deck
    19: C.POLE,         # overhead structure
}

CLASS_MAPS: dict[str, dict[int, C]] = {
    "dales": DALES,
    "asprs": ASPRS,
}


def register_class_map(name: str, table: Mapping[int, C]) -> None:
    """Register (or replace) a scheme."""
    for code in table:
        if not 0 <= int(code) <= 255:
            raise ValueError(f"class code {code} outside 0-255 in scheme {name!r}")
    CLASS_MAPS[name] = {int(code): C(cls) for code, cls in table.items()}


def get_class_map(scheme: str) -> dict[int, C]:
    try:
        return CLASS_MAPS[scheme]
    except KeyError:
        known = ", ".join(sorted(CLASS_MAPS))
        raise UnknownSchemeError(
            f"unknown class map {scheme!r} (registered: {known})"
        ) from None


def map_class(class_code: int, scheme: str = "dales") -> C:
    table = get_class_map(scheme)
    if not 0 <= class_code <= 255:
        raise ValueError(f"class code {class_code} outside 0-255")
    return table.get(class_code, C.UNKNOWN)


def lookup_table(scheme: str = "dales") -> np.ndarray:
    """256-entry uint8 array code → CanonicalClass value, for vectorised mapping."""
    table = get_class_map(scheme)
    lut = np.full(256, int(C.UNKNOWN), dtype=np.uint8)
    for code, cls in table.items():
        lut[code] = int(cls)
    return lut


def map_classes(codes: np.ndarray, scheme: str = "dales") -> np.ndarray:
    return lookup_table(scheme)[np.asarray(codes, dtype=np.uint8)]
