"""
Registered aerial ortho-images: PPM (P6) pixels plus an ESRI world file.

``<name>.ppm`` is paired with the sidecar ``<name>.wld`` holding six reals,
one per line: x-scale, row-rotation, col-rotation, y-scale, x-origin,
y-origin (the world position of the upper-left pixel center).
"""
import io
import logging
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from .models import OrthoImage

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class OrthoError(ValueError):
    """Unreadable image or world file."""


_PILLOW_ERRORS = (UnidentifiedImageError, Image.DecompressionBombError, OSError, ValueError,
                  SyntaxError, EOFError)


def read_ppm_pixels(source: Union[PathLike, bytes]) -> np.ndarray:
    """Binary PPM → (height, width, 3) float64 array in [0, 1]."""
    fp = io.BytesIO(source) if isinstance(source, (bytes, bytearray)) else source
    data = None
    try:
        with Image.open(fp) as img:
            kind = (img.format, img.mode)
            if kind == ("PPM", "RGB"):
                data = np.asarray(img, dtype=np.uint8)
    except _PILLOW_ERRORS as e:
        raise OrthoError(f"cannot read PPM: {e}") from None
    if data is None:
        raise OrthoError(f"expected binary PPM (P6, maxval 255), got {kind[0]} {kind[1]}")
    return data.astype(np.float64) / 255.0


def read_world_file(path: PathLike) -> tuple[float, ...]:
    try:
        lines = [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines()]
    except OSError as e:
        raise OrthoError(f"cannot read world file {path}: {e}") from None
    values = [ln for ln in lines if ln]
    if len(values) != 6:
        raise OrthoError(f"world file {path} must hold 6 numbers, found {len(values)}")
    try:
        return tuple(float(v) for v in values)
    except ValueError as e:
        raise OrthoError(f"world file {path}: {e}") from None


def world_file_path(image_path: PathLike) -> Path:
    return Path(image_path).with_suffix(".wld")


def read_ortho(image_path: PathLike) -> OrthoImage:
    """Load ``<name>.ppm`` and its ``<name>.wld`` sidecar."""
    wld = world_file_path(image_path)
    if not wld.exists():
        raise OrthoError(f"missing world file {wld} for ortho-image {image_path}")
    transform = read_world_file(wld)
    pixels = read_ppm_pixels(image_path)
    height, width = pixels.shape[:2]
    try:
        img = OrthoImage(width, height, pixels, transform)
    except ValueError as e:
        raise OrthoError(str(e)) from None
    logger.info("ortho-image %s: %dx%d px", image_path, width, height)
    return img


def sample_albedo_many(img: OrthoImage, xs, ys) -> np.ndarray:
    """Vectorised bilinear sample; outside the image the border pixel is used."""
    col, row = img.world_to_pixel(xs, ys)
    col = np.clip(np.atleast_1d(col), 0.0, img.width - 1)
    row = np.clip(np.atleast_1d(row), 0.0, img.height - 1)

    c0 = np.floor(col).astype(np.int64)
    r0 = np.floor(row).astype(np.int64)
    c1 = np.minimum(c0 + 1, img.width - 1)
    r1 = np.minimum(r0 + 1, img.height - 1)
    fc = (col - c0)[:, None]
    fr = (row - r0)[:, None]

    px = img.pixels
    top = px[r0, c0] + fc * (px[r0, c1] - px[r0, c0])
    bottom = px[r1, c0] + fc * (px[r1, c1] - px[r1, c0])
    return np.clip(top + fr * (bottom - top), 0.0, 1.0)


def sample_albedo(img: OrthoImage, x: float, y: float) -> tuple[float, float, float]:
    r, g, b = sample_albedo_many(img, [x], [y])[0]
    return (float(r), float(g), float(b))
