"""COCO JSON documents with line/word/char categories and an optional per-annotation "text" key."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from exemplar_ocr.domain.geometry import BBox, ObjectClass
from exemplar_ocr.utils.errors import ExportError, SchemaError

# Stable export ids per category.
CATEGORY_IDS: Dict[ObjectClass, int] = {ObjectClass.LINE: 1, ObjectClass.WORD: 2, ObjectClass.CHAR: 3}
ALLOWED_CATEGORY_NAMES = tuple(cls.value for cls in ObjectClass)


@dataclass(frozen=True)
class CocoImage:
    id: int
    file_name: str
    width: int
    height: int


@dataclass(frozen=True)
class CocoAnnotation:
    id: int
    image_id: int
    bbox: BBox
    category: ObjectClass
    text: Optional[str] = None
    score: Optional[float] = None


@dataclass(frozen=True)
class CocoDocument:
    images: Tuple[CocoImage, ...]
    annotations: Tuple[CocoAnnotation, ...]
    categories: Dict[int, ObjectClass] = field(default_factory=dict)

    def annotations_for(self, image_id: int) -> List[CocoAnnotation]:
        return [ann for ann in self.annotations if ann.image_id == image_id]

    def image_by_file_name(self, file_name: str) -> Optional[CocoImage]:
        for image in self.images:
            if image.file_name == file_name or Path(image.file_name).name == file_name:
                return image
        return None


def _require(node: Dict[str, Any], key: str, path: str) -> Any:
    if not isinstance(node, dict):
        raise SchemaError("expected an object", path=path)
    if key not in node:
        raise SchemaError(f"missing field {key!r}", path=path)
    return node[key]


def _int(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError("expected an integer", path=path)
    return value


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise SchemaError("expected a finite number", path=path)
    return float(value)


def _list(value: Any, path: str) -> list:
    if not isinstance(value, list):
        raise SchemaError("expected a list", path=path)
    return value


def document_from_dict(data: Any) -> CocoDocument:
    """Validate a decoded COCO payload; errors carry a JSON path such as $.annotations[3].bbox."""
    if not isinstance(data, dict):
        raise SchemaError("expected an object", path="$")

    categories: Dict[int, ObjectClass] = {}
    for i, raw in enumerate(_list(_require(data, "categories", "$"), "$.categories")):
        path = f"$.categories[{i}]"
        cat_id = _int(_require(raw, "id", path), f"{path}.id")
        name = _require(raw, "name", path)
        if name not in ALLOWED_CATEGORY_NAMES:
            raise SchemaError(
                f"category name {name!r} is not one of {', '.join(ALLOWED_CATEGORY_NAMES)}",
                path=f"{path}.name",
                allowed=list(ALLOWED_CATEGORY_NAMES),
            )
        categories[cat_id] = ObjectClass(name)

    images: List[CocoImage] = []
    image_ids = set()
    for i, raw in enumerate(_list(_require(data, "images", "$"), "$.images")):
        path = f"$.images[{i}]"
        image = CocoImage(
            id=_int(_require(raw, "id", path), f"{path}.id"),
            file_name=str(_require(raw, "file_name", path)),
            width=_int(_require(raw, "width", path), f"{path}.width"),
            height=_int(_require(raw, "height", path), f"{path}.height"),
        )
        if image.width <= 0 or image.height <= 0:
            raise SchemaError("image size must be positive", path=path)
        if image.id in image_ids:
            raise SchemaError(f"duplicate image id {image.id}", path=f"{path}.id")
        image_ids.add(image.id)
        images.append(image)

    annotations: List[CocoAnnotation] = []
    for i, raw in enumerate(_list(_require(data, "annotations", "$"), "$.annotations")):
        path = f"$.annotations[{i}]"
        image_id = _int(_require(raw, "image_id", path), f"{path}.image_id")
        if image_id not in image_ids:
            raise SchemaError(f"image_id {image_id} does not reference an image", path=f"{path}.image_id")
        category_id = _int(_require(raw, "category_id", path), f"{path}.category_id")
        if category_id not in categories:
            raise SchemaError(
                f"category_id {category_id} does not reference a category", path=f"{path}.category_id"
            )
        coords = _list(_require(raw, "bbox", path), f"{path}.bbox")
        if len(coords) != 4:
            raise SchemaError("bbox must be [x, y, w, h]", path=f"{path}.bbox")
        x, y, w, h = (_number(v, f"{path}.bbox[{j}]") for j, v in enumerate(coords))
        if w <= 0 or h <= 0:
            raise SchemaError("bbox width and height must be positive", path=f"{path}.bbox")
        text = raw.get("text")
        if text is not None and not isinstance(text, str):
            raise SchemaError("text must be a string", path=f"{path}.text")
        score = raw.get("score")
        annotations.append(
            CocoAnnotation(
                id=_int(_require(raw, "id", path), f"{path}.id"),
                image_id=image_id,
                bbox=BBox.from_xywh(x, y, w, h),
                category=categories[category_id],
                text=text,
                score=None if score is None else _number(score, f"{path}.score"),
            )
        )

    return CocoDocument(images=tuple(images), annotations=tuple(annotations), categories=categories)


def parse_coco(path: Union[str, Path]) -> CocoDocument:
    try:
        with open(path, encoding="utf-8") as handle:
            data = json.load(handle)
    except FileNotFoundError:
        raise SchemaError(f"file not found: {path}", path="$", file=str(path))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"not valid UTF-8 JSON ({exc})", path="$", file=str(path))
    return document_from_dict(data)


def document_to_dict(doc: CocoDocument) -> Dict[str, Any]:
    payload_annotations = []
    for ann in doc.annotations:
        row: Dict[str, Any] = {
            "id": ann.id,
            "image_id": ann.image_id,
            "category_id": CATEGORY_IDS[ann.category],
            "bbox": ann.bbox.to_xywh(),
            "area": ann.bbox.area,
            "iscrowd": 0,
        }
        if ann.text is not None:
            row["text"] = ann.text
        if ann.score is not None:
            row["score"] = ann.score
        payload_annotations.append(row)
    return {
        "images": [
            {"id": img.id, "file_name": img.file_name, "width": img.width, "height": img.height}
            for img in doc.images
        ],
        "annotations": payload_annotations,
        "categories": [
            {"id": CATEGORY_IDS[cls], "name": cls.value}
            for cls in sorted(set(doc.categories.values()), key=lambda c: CATEGORY_IDS[c])
        ],
    }


def write_json(payload: Any, path: Union[str, Path]) -> None:
    """UTF-8 JSON written atomically (tmp file, then replace)."""
    path = Path(path)
    tmp_path = path.with_name(path.name + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(tmp_path, "w", encoding="utf-8") as handle:
            json.dump(payload, handle, ensure_ascii=False, separators=(",", ":"))
        os.replace(tmp_path, path)
    except OSError as exc:
        raise ExportError(f"could not write {path} ({exc})", path=str(path))


def write_coco(doc: CocoDocument, path: Union[str, Path]) -> None:
    write_json(document_to_dict(doc), path)
