"""Side-by-side composite: the page with class-coloured boxes, and the recognized text drawn in place."""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Union

import numpy as np
from PIL import Image, ImageDraw

from exemplar_ocr.domain.assembly import PageTranscription
from exemplar_ocr.domain.geometry import BBox, ObjectClass
from exemplar_ocr.domain.rendering import FontPath, render_text
from exemplar_ocr.utils.errors import ExportError, MissingGlyph
from exemplar_ocr.utils.imaging import load_image, to_pil, to_uint8
from exemplar_ocr.utils.logger import logger

BOX_COLOURS = {
    ObjectClass.LINE: (220, 40, 40),
    ObjectClass.WORD: (30, 160, 60),
    ObjectClass.CHAR: (40, 90, 220),
}


def _draw_box(draw: ImageDraw.ImageDraw, bbox: BBox, cls: ObjectClass) -> None:
    x0, y0, x1, y1 = bbox.to_pixels()
    draw.rectangle((x0, y0, max(x0, x1 - 1), max(y0, y1 - 1)), outline=BOX_COLOURS[cls], width=1)


def _paste_text(canvas: np.ndarray, font_path: FontPath, text: str, bbox: BBox) -> None:
    height, width = canvas.shape
    x0, y0, x1, y1 = bbox.to_pixels()
    x0, y0, x1, y1 = max(x0, 0), max(y0, 0), min(x1, width), min(y1, height)
    if x1 <= x0 or y1 <= y0 or not text.strip():
        return
    try:
        rendered = render_text(font_path, text, x1 - x0, y1 - y0, margin=0.05)
    except MissingGlyph as exc:
        logger("visualize").debug("text not drawn: %s", exc)
        return
    canvas[y0:y1, x0:x1] = np.minimum(canvas[y0:y1, x0:x1], rendered.crop.pixels)


def compose(
    pixels: np.ndarray,
    transcription: PageTranscription,
    font_path: Optional[FontPath] = None,
) -> Image.Image:
    """RGB image of size 2W x H; the right half is blank when there is no text or no font."""
    height, width = pixels.shape
    left = to_pil(pixels).convert("RGB")
    draw = ImageDraw.Draw(left)
    text_canvas = np.ones((height, width), dtype=np.float32)

    for line in transcription.lines:
        _draw_box(draw, line.bbox, ObjectClass.LINE)
        for token in line.tokens:
            _draw_box(draw, token.bbox, token.level)
            if token.level == ObjectClass.WORD:
                for char in token.chars:
                    _draw_box(draw, char.bbox, ObjectClass.CHAR)
            if font_path is not None:
                _paste_text(text_canvas, font_path, token.text, token.bbox)

    composite = Image.new("RGB", (2 * width, height), color=(255, 255, 255))
    composite.paste(left, (0, 0))
    composite.paste(Image.fromarray(to_uint8(text_canvas)).convert("RGB"), (width, 0))
    return composite


def visualize(
    image: Union[str, Path, np.ndarray],
    transcription: PageTranscription,
    out_path: Union[str, Path],
    *,
    font_path: Optional[FontPath] = None,
) -> Path:
    """Write the composite as PNG; identical inputs give identical bytes."""
    pixels = load_image(image) if isinstance(image, (str, Path)) else np.asarray(image, dtype=np.float32)
    if font_path is None and transcription.lines:
        logger("visualize").warning("no font configured; recognized text is not drawn")
    composite = compose(pixels, transcription, font_path)
    out_path = Path(out_path)
    try:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        composite.save(out_path, format="PNG")
    except OSError as exc:
        raise ExportError(f"could not write {out_path} ({exc})", path=str(out_path))
    return out_path
