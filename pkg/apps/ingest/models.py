"""Point-cloud domain types: raw LiDAR returns, canonical classes, ortho-images."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

RGB = tuple[float, float, float]


class CanonicalClass(enum.IntEnum):
    """Classes the renderer has templates for. Values are stored in .pkt files."""

    GROUND = 0
    GRASS = 1
    ROAD = 2
    VEGETATION = 3
    BUILDING = 4
    POLE = 5
    FENCE = 6
    VEHICLE = 7
    POWER_LINE = 8
    UNKNOWN = 9

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "CanonicalClass":
        try:
            return cls[label.strip().upper().replace("-", "_")]
        except KeyError:
            raise ValueError(f"unknown class name: {label!r}") from None


GROUND_FAMILY = frozenset(
    {CanonicalClass.GROUND, CanonicalClass.GRASS, CanonicalClass.ROAD}
)


def _unit(value: float) -> bool:
    return 0.0 <= value <= 1.0


@dataclass(frozen=True)
class RawPoint:
    """One LiDAR return. Coordinates in meters, shared local metric frame."""

    x: float
    y: float
    z: float
    class_code: int
    rgb: Optional[RGB] = None
    intensity: Optional[float] = None

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise ValueError(f"non-finite coordinate ({self.x}, {self.y}, {self.z})")
        if not 0 <= self.class_code <= 255:
            raise ValueError(f"class code {self.class_code} outside 0-255")
        if self.rgb is not None:
            if len(self.rgb) != 3 or not all(_unit(c) for c in self.rgb):
                raise ValueError(f"rgb {self.rgb} outside the unit interval")
        if self.intensity is not None and not _unit(self.intensity):
            raise ValueError(f"intensity {self.intensity} outside the unit interval")
        if self.intensity is not None and self.rgb is None:
            raise ValueError("intensity is only carried alongside rgb")

    @property
    def position(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)


def positions(points: Sequence[RawPoint]) -> np.ndarray:
    """Point positions as an (N, 3) float64 array."""
    if not points:
        return np.zeros((0, 3), dtype=np.float64)
    return np.array([(p.x, p.y, p.z) for p in points], dtype=np.float64)


def class_codes(points: Sequence[RawPoint]) -> np.ndarray:
    return np.array([p.class_code for p in points], dtype=np.uint8)


@dataclass(frozen=True, eq=False)
class OrthoImage:
    """Registered top-down image.

    ``world_transform`` holds the six world-file numbers in ESRI order
    (x-scale, row-rotation, col-rotation, y-scale, x-origin, y-origin). They
    map pixel centers (col, row) to world meters; sampling uses the inverse.
    """

    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3), row-major, values in [0, 1]
    world_transform: tuple[float, float, float, float, float, float]

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("ortho-image must have positive size")
        if self.pixels.shape != (self.height, self.width, 3):
            raise ValueError(
                f"pixel array shape {self.pixels.shape} does not match "
                f"{self.height}x{self.width}x3"
            )
        if self.pixels.size and (self.pixels.min() < 0.0 or self.pixels.max() > 1.0):
            raise ValueError("pixel components must lie in [0, 1]")
        a, d, b, e, _, _ = self.world_transform
        if a * e - b * d == 0.0:
            raise ValueError("world transform is not invertible")

    def world_to_pixel(self, x, y):
        """Continuous pixel coordinates; integers are pixel centers."""
        a, d, b, e, c, f = self.world_transform
        det = a * e - b * d
        dx = np.asarray(x, dtype=np.float64) - c
        dy = np.asarray(y, dtype=np.float64) - f
        col = (e * dx - b * dy) / det
        row = (a * dy - d * dx) / det
        return col, row
