import io
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

from .models import FrameBuffers


def to_rgb8(color: np.ndarray) -> np.ndarray:
    """Unit-interval colours to u8, rounding half up."""
    return np.floor(np.clip(color, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def _image(fb: Union[FrameBuffers, np.ndarray]) -> Image.Image:
    color = fb.color if isinstance(fb, FrameBuffers) else np.asarray(fb)
    return Image.fromarray(to_rgb8(color))


def write_ppm(fb: Union[FrameBuffers, np.ndarray]) -> bytes:
    """Binary P6, maxval 255."""
    buffer = io.BytesIO()
    _image(fb).save(buffer, format="PPM")
    return buffer.getvalue()


def save_image(fb: Union[FrameBuffers, np.ndarray], path: Union[str, Path]) -> Path:
    """Write ``.ppm`` or ``.png`` by extension."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".ppm":
        path.write_bytes(write_ppm(fb))
    elif suffix == ".png":
        buffer = io.BytesIO()
        _image(fb).save(buffer, format="PNG")
        path.write_bytes(buffer.getvalue())
    else:
        raise ValueError(f"unsupported image format {suffix!r} (use .ppm or .png)")
    return path
