"""Pixel-array helpers shared by the encoder, detectors and visualization.

Internal images are 2-D float32 arrays in [0, 1], 0 = black ink, 1 = white paper.
"""

from __future__ import annotations

from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from exemplar_ocr.utils.errors import ImageLoadError

LUMINANCE_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float64)


def to_grayscale(image: Image.Image) -> np.ndarray:
    """Convert a PIL image to a float32 grayscale array in [0, 1]."""
    if image.mode in ("RGBA", "LA", "PA") or (image.mode == "P" and "transparency" in image.info):
        # Transparent regions read as white paper.
        rgba = image.convert("RGBA")
        background = Image.new("RGBA", rgba.size, (255, 255, 255, 255))
        image = Image.alpha_composite(background, rgba)

    if image.mode == "L":
        return np.asarray(image, dtype=np.float32) / 255.0
    if image.mode in ("I;16", "I"):
        raw = np.asarray(image, dtype=np.float64)
        peak = 65535.0 if image.mode == "I;16" else max(float(raw.max()), 1.0)
        return np.clip(raw / peak, 0.0, 1.0).astype(np.float32)
    if image.mode == "1":
        return np.asarray(image.convert("L"), dtype=np.float32) / 255.0

    rgb = np.asarray(image.convert("RGB"), dtype=np.float64)
    gray = rgb @ LUMINANCE_WEIGHTS / 255.0
    return np.clip(gray, 0.0, 1.0).astype(np.float32)


def load_image(path: Union[str, Path]) -> np.ndarray:
    try:
        with Image.open(path) as image:
            image.load()
            return to_grayscale(image)
    except FileNotFoundError:
        raise ImageLoadError(f"image not found: {path}", path=str(path))
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise ImageLoadError(f"image could not be decoded: {path} ({exc})", path=str(path))


def to_uint8(pixels: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(pixels * 255.0), 0, 255).astype(np.uint8)


def to_pil(pixels: np.ndarray) -> Image.Image:
    return Image.fromarray(to_uint8(pixels))


def save_png(pixels: np.ndarray, path: Union[str, Path]) -> None:
    to_pil(pixels).save(path, format="PNG")


def resize_bilinear(pixels: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize of a float array; constant inputs stay exactly constant."""
    if pixels.shape == (height, width):
        return pixels.astype(np.float32, copy=True)
    if pixels.size and float(pixels.max()) == float(pixels.min()):
        return np.full((height, width), pixels.flat[0], dtype=np.float32)
    image = Image.fromarray(pixels.astype(np.float32))
    resized = image.resize((width, height), Image.Resampling.BILINEAR)
    return np.asarray(resized, dtype=np.float32)


def pad_to_square(pixels: np.ndarray, fill: float = 1.0) -> np.ndarray:
    """Pad symmetrically (extra row/column on the bottom/right) to a square."""
    height, width = pixels.shape
    side = max(height, width)
    if height == width:
        return pixels
    top = (side - height) // 2
    left = (side - width) // 2
    out = np.full((side, side), fill, dtype=np.float32)
    out[top : top + height, left : left + width] = pixels
    return out
