"""Write pipeline results as per-level COCO files and assembled page text."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import FrozenSet, Iterable, List, Sequence, Union

from exemplar_ocr.domain.geometry import ObjectClass
from exemplar_ocr.domain.recognition import RecognizedToken
from exemplar_ocr.engine.pipeline import JobResult
from exemplar_ocr.export.coco import CATEGORY_IDS, CocoAnnotation, CocoDocument, CocoImage, write_coco
from exemplar_ocr.utils.errors import ExportError, ValidationError, throw

COCO_FILE_NAMES = {
    ObjectClass.LINE: "coco_line.json",
    ObjectClass.WORD: "coco_word.json",
    ObjectClass.CHAR: "coco_char.json",
}
TEXT_DIR = "text"


@dataclass(frozen=True)
class ExportSelection:
    levels: FrozenSet[ObjectClass] = frozenset(ObjectClass)
    include_assembled_text: bool = True

    def __post_init__(self):
        object.__setattr__(self, "levels", frozenset(ObjectClass(level) for level in self.levels))
        if not self.levels and not self.include_assembled_text:
            throw("select at least one level or the assembled text", ValidationError)


def _char_annotations(token: RecognizedToken) -> Iterable[tuple]:
    if token.level == ObjectClass.CHAR:
        yield token.bbox, token.text, token.similarity
        return
    for char in token.chars:
        yield char.bbox, char.text or None, char.similarity


def build_level_document(results: Sequence[JobResult], level: ObjectClass) -> CocoDocument:
    """One COCO document for a level; image ids follow result order, starting at 1."""
    images: List[CocoImage] = []
    annotations: List[CocoAnnotation] = []

    def add(image_id: int, bbox, text, score) -> None:
        annotations.append(
            CocoAnnotation(
                id=len(annotations) + 1,
                image_id=image_id,
                bbox=bbox,
                category=level,
                text=text,
                score=score,
            )
        )

    for position, result in enumerate(results, start=1):
        images.append(CocoImage(position, Path(result.path).name, result.width, result.height))
        for line in result.transcription.lines:
            if level == ObjectClass.LINE:
                add(position, line.bbox, line.text, None)
                continue
            for token in line.tokens:
                if level == ObjectClass.WORD and token.level == ObjectClass.WORD:
                    add(position, token.bbox, token.text, token.similarity)
                elif level == ObjectClass.CHAR:
                    for bbox, text, score in _char_annotations(token):
                        add(position, bbox, text, score)

    return CocoDocument(
        images=tuple(images),
        annotations=tuple(annotations),
        categories={CATEGORY_IDS[level]: level},
    )


def _write_text(text: str, path: Path) -> None:
    tmp_path = path.with_name(path.name + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(tmp_path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp_path, path)
    except OSError as exc:
        raise ExportError(f"could not write {path} ({exc})", path=str(path))


def export_results(
    results: Sequence[JobResult],
    sel: ExportSelection,
    out_dir: Union[str, Path],
) -> List[Path]:
    """Write the selected outputs for successful results; returns the written paths."""
    if not results:
        throw("results must not be empty", ValidationError)
    out_dir = Path(out_dir)
    succeeded = [result for result in results if result.ok]
    written: List[Path] = []

    for level in sorted(sel.levels, key=lambda cls: CATEGORY_IDS[cls]):
        path = out_dir / COCO_FILE_NAMES[level]
        write_coco(build_level_document(succeeded, level), path)
        written.append(path)

    if sel.include_assembled_text:
        for result in succeeded:
            path = out_dir / TEXT_DIR / f"{result.image_id.replace(os.sep, '_')}.txt"
            _write_text(result.transcription.full_text, path)
            written.append(path)
    return written
