"""Font rasterization for exemplars, synthetic pages and visualizations."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import FrozenSet, List, Optional, Sequence, Tuple, Union

from fontTools.ttLib import TTFont, TTLibError
from PIL import Image, ImageDraw, ImageFont, ImageOps

from exemplar_ocr.domain.encoder import ImageCrop
from exemplar_ocr.domain.geometry import BBox
from exemplar_ocr.utils.errors import FontLoadError, MissingGlyph, ValidationError, throw
from exemplar_ocr.utils.imaging import to_grayscale

RENDER_EM = 256
RENDER_MARGIN = 0.1
MIN_CANVAS = 16

FontPath = Union[str, Path]


@dataclass(frozen=True, eq=False)
class RenderedText:
    crop: ImageCrop
    # One entry per character of the text: its advance cell in crop coordinates.
    char_boxes: Tuple[Optional[BBox], ...]


def font_id_for(font_path: FontPath) -> str:
    return Path(font_path).stem


def font_ids_for(fonts: Sequence[FontPath]) -> List[str]:
    """Distinct ids for a font list: the file stem, prefixed by its directory when stems repeat."""
    stems = [font_id_for(font) for font in fonts]
    ids: List[str] = []
    for font, stem in zip(fonts, stems):
        base = stem if stems.count(stem) == 1 else f"{Path(font).parent.name}-{stem}"
        candidate, n = base, 2
        while candidate in ids:
            candidate, n = f"{base}-{n}", n + 1
        ids.append(candidate)
    return ids


@functools.lru_cache(maxsize=64)
def font_codepoints(font_path: str) -> FrozenSet[int]:
    """Codepoints mapped by the font's best cmap subtable."""
    try:
        with TTFont(font_path, lazy=True, fontNumber=0) as font:
            cmap = font.getBestCmap() or {}
    except FileNotFoundError:
        raise FontLoadError(f"font file not found: {font_path}", path=font_path)
    except (TTLibError, OSError, KeyError, AssertionError) as exc:
        raise FontLoadError(f"font file could not be parsed: {font_path} ({exc})", path=font_path)
    return frozenset(cmap)


def check_coverage(font_path: FontPath, text: str) -> None:
    covered = font_codepoints(str(font_path))
    missing = sorted({ch for ch in text if not ch.isspace() and ord(ch) not in covered})
    if missing:
        raise MissingGlyph(
            f"{font_id_for(font_path)} lacks {''.join(missing)!r}",
            font=str(font_path),
            missing=[f"U+{ord(ch):04X}" for ch in missing],
        )


def _load_font(font_path: FontPath, size: int) -> ImageFont.FreeTypeFont:
    try:
        return ImageFont.truetype(str(font_path), size)
    except OSError as exc:
        raise FontLoadError(f"font file could not be loaded: {font_path} ({exc})", path=str(font_path))


def render_text(
    font_path: FontPath,
    text: str,
    width: int,
    height: int,
    *,
    margin: float = RENDER_MARGIN,
) -> RenderedText:
    """Render black text on white, scaled to fit width x height inside `margin`, centered."""
    if not text:
        throw("text must not be empty", ValidationError)
    if width <= 0 or height <= 0:
        throw("render target must be positive", ValidationError, width=width, height=height)
    check_coverage(font_path, text)

    font = _load_font(font_path, RENDER_EM)
    ascent, descent = font.getmetrics()
    pad = RENDER_EM // 4
    stage = Image.new(
        "L",
        (int(math.ceil(font.getlength(text))) + 2 * pad, ascent + descent + 2 * pad),
        color=255,
    )
    ImageDraw.Draw(stage).text((pad, pad), text, font=font, fill=0)

    canvas = Image.new("L", (width, height), color=255)
    ink = ImageOps.invert(stage).getbbox()
    if ink is None:
        return RenderedText(ImageCrop(to_grayscale(canvas)), tuple(None for _ in text))

    ink_x0, ink_y0, ink_x1, ink_y1 = ink
    ink_w, ink_h = ink_x1 - ink_x0, ink_y1 - ink_y0
    scale = min(width * (1 - 2 * margin) / ink_w, height * (1 - 2 * margin) / ink_h)
    new_w = max(1, round(ink_w * scale))
    new_h = max(1, round(ink_h * scale))
    glyphs = stage.crop(ink).resize((new_w, new_h), Image.Resampling.LANCZOS)
    off_x, off_y = (width - new_w) // 2, (height - new_h) // 2
    canvas.paste(glyphs, (off_x, off_y))

    sx = new_w / ink_w
    boxes = []
    for i in range(len(text)):
        start = pad + font.getlength(text[:i])
        end = pad + font.getlength(text[: i + 1])
        x0 = max(0.0, off_x + (start - ink_x0) * sx)
        x1 = min(float(width), off_x + (end - ink_x0) * sx)
        if x1 <= x0:
            boxes.append(None)
            continue
        boxes.append(BBox(x0, float(off_y), x1, float(off_y + new_h)))
    return RenderedText(ImageCrop(to_grayscale(canvas)), tuple(boxes))


def render_exemplar(font_path: FontPath, text: str, canvas: int) -> ImageCrop:
    """Square canvas x canvas render of text used as a retrieval exemplar."""
    if canvas < MIN_CANVAS:
        throw(f"canvas must be at least {MIN_CANVAS}", ValidationError, canvas=canvas)
    return render_text(font_path, text, canvas, canvas).crop
