"""Bounding-box arithmetic, IoU and non-maximum suppression."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, Tuple

from exemplar_ocr.utils.errors import DegenerateBox, ValidationError, throw
from exemplar_ocr.utils.validators import validate_positive_int, validate_threshold


class ObjectClass(str, Enum):
    LINE = "line"
    WORD = "word"
    CHAR = "char"


@dataclass(frozen=True)
class BBox:
    """Axis-aligned pixel rectangle, origin top-left, x1/y1 exclusive."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        coords = (self.x0, self.y0, self.x1, self.y1)
        if not all(math.isfinite(c) for c in coords):
            throw("box coordinates must be finite", ValidationError, box=coords)
        if self.x0 >= self.x1 or self.y0 >= self.y1:
            throw("box must satisfy x0 < x1 and y0 < y1", ValidationError, box=coords)

    @classmethod
    def from_xywh(cls, x: float, y: float, w: float, h: float) -> BBox:
        return cls(float(x), float(y), float(x) + float(w), float(y) + float(h))

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> Tuple[float, float]:
        return ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)

    def contains_point(self, x: float, y: float) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    def translate(self, dx: float, dy: float) -> BBox:
        return BBox(self.x0 + dx, self.y0 + dy, self.x1 + dx, self.y1 + dy)

    def to_xywh(self) -> List[float]:
        return [self.x0, self.y0, self.width, self.height]

    def to_pixels(self) -> Tuple[int, int, int, int]:
        """Integer slice bounds: floor for x0/y0, ceil for x1/y1."""
        return (
            math.floor(self.x0),
            math.floor(self.y0),
            math.ceil(self.x1),
            math.ceil(self.y1),
        )

    def sort_key(self) -> Tuple[float, float, float, float]:
        return (self.x0, self.y0, self.x1, self.y1)


@dataclass(frozen=True)
class DetectedObject:
    bbox: BBox
    cls: ObjectClass
    confidence: float

    def __post_init__(self):
        if not isinstance(self.cls, ObjectClass):
            throw("cls must be an ObjectClass", ValidationError, cls=self.cls)
        validate_threshold(self.confidence, "confidence")


def iou(a: BBox, b: BBox) -> float:
    inter_w = min(a.x1, b.x1) - max(a.x0, b.x0)
    inter_h = min(a.y1, b.y1) - max(a.y0, b.y0)
    if inter_w <= 0 or inter_h <= 0:
        # Edge-touching boxes share no area.
        return 0.0
    inter = inter_w * inter_h
    union = a.area + b.area - inter
    return min(1.0, max(0.0, inter / union))


def _nms_order_key(det: DetectedObject):
    return (-det.confidence, *det.bbox.sort_key(), det.cls.value)


def nms(dets: Iterable[DetectedObject], iou_thresh: float) -> List[DetectedObject]:
    """Greedy class-wise suppression.

    Boxes are visited by confidence descending (ties: smaller x0, then y0); a box is kept
    iff its IoU with every kept box of the same class is <= iou_thresh.
    """
    iou_thresh = validate_threshold(iou_thresh, "iou_thresh")
    kept: List[DetectedObject] = []
    kept_by_class: dict[ObjectClass, List[BBox]] = {}
    for det in sorted(dets, key=_nms_order_key):
        same_class = kept_by_class.setdefault(det.cls, [])
        if all(iou(det.bbox, other) <= iou_thresh for other in same_class):
            kept.append(det)
            same_class.append(det.bbox)
    return kept


def clip(b: BBox, width: int, height: int) -> BBox:
    validate_positive_int(width, "width")
    validate_positive_int(height, "height")
    x0 = min(max(b.x0, 0.0), float(width))
    y0 = min(max(b.y0, 0.0), float(height))
    x1 = min(max(b.x1, 0.0), float(width))
    y1 = min(max(b.y1, 0.0), float(height))
    if x1 <= x0 or y1 <= y0:
        raise DegenerateBox(box=(b.x0, b.y0, b.x1, b.y1), width=width, height=height)
    return BBox(x0, y0, x1, y1)

