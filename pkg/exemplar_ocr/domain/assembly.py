"""Reading-order reconstruction for horizontal and vertical (right-to-left column) pages."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, List, Sequence, Tuple

from exemplar_ocr.domain.geometry import BBox

if TYPE_CHECKING:
    from exemplar_ocr.domain.recognition import RecognizedToken

# Lines whose centers differ by less than this share of the mean line thickness form one visual row.
SKEW_TOLERANCE = 0.3


class Orientation(str, Enum):
    HORIZONTAL = "horizontal"
    VERTICAL = "vertical"


@dataclass(frozen=True)
class LineTranscription:
    bbox: BBox
    tokens: Tuple[RecognizedToken, ...]
    text: str


@dataclass(frozen=True)
class PageTranscription:
    lines: Tuple[LineTranscription, ...]
    full_text: str
    orientation: Orientation

    @classmethod
    def empty(cls, orientation: Orientation) -> PageTranscription:
        return cls(lines=(), full_text="", orientation=orientation)


def reading_order_key(bbox: BBox, orientation: Orientation) -> Tuple[float, float, float, float]:
    """Position of a token inside a line: left-to-right, or top-to-bottom when vertical."""
    if orientation == Orientation.VERTICAL:
        return (bbox.y0, bbox.x0, bbox.y1, bbox.x1)
    return (bbox.x0, bbox.y0, bbox.x1, bbox.y1)


def order_lines(
    lines: Sequence[BBox],
    orientation: Orientation,
    skew_tolerance: float = SKEW_TOLERANCE,
) -> List[int]:
    """Return input indices in reading order.

    Horizontal pages read rows top to bottom (ties by x0); vertical pages read columns right to
    left (ties by y0). Lines within `skew_tolerance` of the mean thickness share a row/column.
    """
    if not lines:
        return []

    vertical = orientation == Orientation.VERTICAL
    if vertical:
        band = skew_tolerance * sum(b.width for b in lines) / len(lines)
        primary = [-b.center[0] for b in lines]
        secondary = [b.y0 for b in lines]
    else:
        band = skew_tolerance * sum(b.height for b in lines) / len(lines)
        primary = [b.center[1] for b in lines]
        secondary = [b.x0 for b in lines]

    ranked = sorted(range(len(lines)), key=lambda i: (primary[i], secondary[i], *lines[i].sort_key(), i))

    groups: List[List[int]] = []
    anchor = None
    for i in ranked:
        if anchor is None or primary[i] - anchor > band:
            groups.append([])
            anchor = primary[i]
        groups[-1].append(i)

    order: List[int] = []
    for group in groups:
        order.extend(sorted(group, key=lambda i: (secondary[i], primary[i], *lines[i].sort_key(), i)))
    return order


def compose_line(tokens: Sequence[RecognizedToken], orientation: Orientation, insert_spaces: bool) -> str:
    separator = " " if insert_spaces else ""
    return separator.join(token.text for token in tokens)


def assemble(
    lines: Sequence[Tuple[BBox, Sequence[RecognizedToken]]],
    orientation: Orientation,
    insert_spaces: bool,
) -> PageTranscription:
    """Order lines and tokens (all in page coordinates) and build the page text."""
    if not lines:
        return PageTranscription.empty(orientation)

    order = order_lines([bbox for bbox, _ in lines], orientation)
    assembled: List[LineTranscription] = []
    for index in order:
        bbox, tokens = lines[index]
        ordered = tuple(
            sorted(tokens, key=lambda t: (*reading_order_key(t.bbox, orientation), t.text))
        )
        assembled.append(
            LineTranscription(
                bbox=bbox,
                tokens=ordered,
                text=compose_line(ordered, orientation, insert_spaces),
            )
        )
    return PageTranscription(
        lines=tuple(assembled),
        full_text="\n".join(line.text for line in assembled),
        orientation=orientation,
    )
