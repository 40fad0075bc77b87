"""Line, word and character localization: YOLO-style ONNX models or ground-truth COCO boxes."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np

from exemplar_ocr.config.specs import ConfidenceMode, DetectorKind, DetectorSpec
from exemplar_ocr.domain.encoder import ImageCrop, Provenance, load_onnx_session
from exemplar_ocr.domain.geometry import BBox, DetectedObject, ObjectClass, clip, nms
from exemplar_ocr.export.coco import CocoDocument, parse_coco
from exemplar_ocr.utils.errors import DegenerateBox, MissingAnnotation, ModelLoadError, ShapeMismatch
from exemplar_ocr.utils.imaging import resize_bilinear
from exemplar_ocr.utils.logger import logger

LETTERBOX_FILL = 114.0 / 255.0


@dataclass(frozen=True)
class RawDetection:
    """One model output row, in model input coordinates."""

    cx: float
    cy: float
    w: float
    h: float
    objectness: float
    class_scores: Tuple[float, ...]

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ShapeMismatch("raw detection must have positive width and height", w=self.w, h=self.h)
        if not 0.0 <= self.objectness <= 1.0 or any(not 0.0 <= s <= 1.0 for s in self.class_scores):
            raise ShapeMismatch("raw detection scores must lie in [0, 1]")


@dataclass(frozen=True)
class Letterbox:
    """Aspect-preserving resize plus padding; maps model coordinates back to the image."""

    scale_x: float
    scale_y: float
    pad_x: int
    pad_y: int
    new_w: int
    new_h: int

    @classmethod
    def for_sizes(cls, orig_size: Tuple[int, int], input_size: Tuple[int, int]) -> Letterbox:
        orig_w, orig_h = orig_size
        in_h, in_w = input_size
        ratio = min(in_w / orig_w, in_h / orig_h)
        new_w = max(1, min(in_w, round(orig_w * ratio)))
        new_h = max(1, min(in_h, round(orig_h * ratio)))
        return cls(
            scale_x=new_w / orig_w,
            scale_y=new_h / orig_h,
            pad_x=(in_w - new_w) // 2,
            pad_y=(in_h - new_h) // 2,
            new_w=new_w,
            new_h=new_h,
        )

    def to_image(self, x: float, y: float) -> Tuple[float, float]:
        return ((x - self.pad_x) / self.scale_x, (y - self.pad_y) / self.scale_y)


def letterbox(pixels: np.ndarray, input_size: Tuple[int, int]) -> Tuple[np.ndarray, Letterbox]:
    height, width = pixels.shape
    box = Letterbox.for_sizes((width, height), input_size)
    in_h, in_w = input_size
    canvas = np.full((in_h, in_w), LETTERBOX_FILL, dtype=np.float32)
    canvas[box.pad_y : box.pad_y + box.new_h, box.pad_x : box.pad_x + box.new_w] = resize_bilinear(
        pixels, box.new_h, box.new_w
    )
    return canvas, box


def decode(
    raw: Sequence[RawDetection],
    spec: DetectorSpec,
    orig_size: Tuple[int, int],
) -> List[DetectedObject]:
    """Model rows -> clipped, thresholded, NMS-suppressed boxes in image coordinates.

    orig_size is (W, H); spec.input_size is (H, W).
    """
    if not raw:
        return []
    orig_w, orig_h = orig_size
    box = Letterbox.for_sizes(orig_size, spec.input_size)
    decoded: List[DetectedObject] = []
    for row in raw:
        if len(row.class_scores) != len(spec.classes):
            raise ShapeMismatch(
                f"row has {len(row.class_scores)} class scores, spec maps {len(spec.classes)} classes",
                expected=len(spec.classes),
                actual=len(row.class_scores),
            )
        class_index = int(np.argmax(row.class_scores))
        best = float(row.class_scores[class_index])
        confidence = best * row.objectness if spec.conf_mode == ConfidenceMode.PRODUCT else best
        if confidence < spec.conf_thresh:
            continue
        x0, y0 = box.to_image(row.cx - row.w / 2.0, row.cy - row.h / 2.0)
        x1, y1 = box.to_image(row.cx + row.w / 2.0, row.cy + row.h / 2.0)
        try:
            bbox = clip(BBox(x0, y0, x1, y1), orig_w, orig_h)
        except DegenerateBox:
            logger("detection").debug("dropped detection outside the image: %s", (x0, y0, x1, y1))
            continue
        decoded.append(DetectedObject(bbox, spec.classes[class_index], min(1.0, max(0.0, confidence))))
    return nms(decoded, spec.iou_thresh)


class Detector(Protocol):
    spec: DetectorSpec

    def detect(self, crop: ImageCrop) -> List[DetectedObject]: ...


class OnnxDetector:
    """Anchor-free rows N x (4 + 1 + C): cx, cy, w, h, objectness, class scores."""

    def __init__(self, spec: DetectorSpec):
        self.spec = spec
        self._session = load_onnx_session(spec.model_path)
        model_input = self._session.get_inputs()[0]
        self._input_name = model_input.name
        channels = model_input.shape[1] if len(model_input.shape) == 4 else 1
        self._channels = channels if isinstance(channels, int) else 1

    def _rows(self, output: np.ndarray) -> List[RawDetection]:
        width = 5 + len(self.spec.classes)
        rows = np.asarray(output, dtype=np.float32)
        while rows.ndim > 2 and rows.shape[0] == 1:
            rows = rows[0]
        if rows.ndim == 2 and rows.shape[-1] != width and rows.shape[0] == width:
            rows = rows.T
        if rows.ndim != 2 or rows.shape[-1] != width:
            raise ShapeMismatch(f"detector output shape {rows.shape} does not match {width} columns")
        parsed = []
        for cx, cy, w, h, objectness, *scores in rows.tolist():
            if w <= 0 or h <= 0:
                continue
            parsed.append(
                RawDetection(
                    cx,
                    cy,
                    w,
                    h,
                    min(1.0, max(0.0, objectness)),
                    tuple(min(1.0, max(0.0, s)) for s in scores),
                )
            )
        return parsed

    def detect(self, crop: ImageCrop) -> List[DetectedObject]:
        tensor, _ = letterbox(crop.pixels, self.spec.input_size)
        tensor = np.repeat(tensor[np.newaxis, np.newaxis], self._channels, axis=1)
        try:
            outputs = self._session.run(None, {self._input_name: tensor})
        except Exception as exc:
            raise ModelLoadError(f"detector inference failed: {exc}", path=self.spec.model_path)
        return decode(self._rows(outputs[0]), self.spec, (crop.width, crop.height))


class AnnotationStore:
    """Ground-truth boxes per page, keyed by page id, file name or file stem; read-only once built."""

    def __init__(self):
        self._pages: Dict[str, Tuple[Tuple[BBox, ObjectClass], ...]] = {}

    def add_page(self, key: str, boxes: Sequence[Tuple[BBox, ObjectClass]]) -> None:
        self._pages[str(key)] = tuple(boxes)

    def add_document(self, doc: CocoDocument) -> None:
        for image in doc.images:
            boxes = [(ann.bbox, ann.category) for ann in doc.annotations_for(image.id)]
            for key in (str(image.id), image.file_name, Path(image.file_name).stem):
                self._pages.setdefault(key, tuple(boxes))

    @classmethod
    def from_path(cls, path: Union[str, Path]) -> AnnotationStore:
        store = cls()
        store.add_document(parse_coco(path))
        return store

    def lookup(self, provenance: Optional[Provenance]) -> Tuple[Tuple[BBox, ObjectClass], ...]:
        if provenance is not None:
            keys = [provenance.page_id]
            if provenance.file_name:
                keys += [provenance.file_name, Path(provenance.file_name).stem]
            for key in keys:
                if key in self._pages:
                    return self._pages[key]
        page = provenance.page_id if provenance else None
        raise MissingAnnotation(f"no ground-truth annotation for page {page!r}", page_id=page)


class GroundTruthDetector:
    """Replays annotation boxes whose centers fall inside the crop, in crop coordinates."""

    def __init__(self, spec: DetectorSpec, annotations: Optional[AnnotationStore] = None):
        self.spec = spec
        if annotations is None:
            if not spec.annotation_path:
                raise MissingAnnotation("ground-truth detector has no annotation source")
            annotations = AnnotationStore.from_path(spec.annotation_path)
        self.annotations = annotations

    def detect(self, crop: ImageCrop) -> List[DetectedObject]:
        provenance = crop.provenance
        boxes = self.annotations.lookup(provenance)
        region = provenance.bbox if provenance and provenance.bbox else None
        dx, dy = (region.x0, region.y0) if region else (0.0, 0.0)
        found: List[DetectedObject] = []
        for bbox, cls in boxes:
            if region is not None and not region.contains_point(*bbox.center):
                continue
            local = bbox.translate(-dx, -dy) if region else bbox
            try:
                local = clip(local, crop.width, crop.height)
            except DegenerateBox:
                continue
            found.append(DetectedObject(local, cls, 1.0))
        return found


def build_detector(spec: DetectorSpec, annotations: Optional[AnnotationStore] = None) -> Detector:
    if spec.kind == DetectorKind.GROUND_TRUTH:
        return GroundTruthDetector(spec, annotations)
    return OnnxDetector(spec)


def _as_detector(detector: Union[Detector, DetectorSpec]) -> Detector:
    if isinstance(detector, DetectorSpec):
        return build_detector(detector)
    return detector


def detect_lines(page: ImageCrop, detector: Union[Detector, DetectorSpec]) -> List[DetectedObject]:
    detector = _as_detector(detector)
    return [obj for obj in detector.detect(page) if obj.cls == ObjectClass.LINE]


def localize(
    line: ImageCrop,
    detector: Union[Detector, DetectorSpec],
    no_words: bool,
) -> Tuple[List[DetectedObject], List[DetectedObject]]:
    """(word boxes, char boxes) in line-local coordinates; words are empty when no_words."""
    detector = _as_detector(detector)
    found = detector.detect(line)
    words = [] if no_words else [obj for obj in found if obj.cls == ObjectClass.WORD]
    chars = [obj for obj in found if obj.cls == ObjectClass.CHAR]
    return words, chars
