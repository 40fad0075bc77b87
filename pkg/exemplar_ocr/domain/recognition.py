"""Crop recognition by exemplar retrieval, with word-to-character fallback below a cosine threshold."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from exemplar_ocr.config.specs import (
    DEFAULT_UNREADABLE_THRESHOLD,
    DEFAULT_WORD_FALLBACK_THRESHOLD,
    UNREADABLE_MARKER,
)
from exemplar_ocr.domain.assembly import Orientation, reading_order_key
from exemplar_ocr.domain.encoder import Embedding, Encoder, ImageCrop, embed_batch
from exemplar_ocr.domain.exemplar_index import ExemplarIndex, query
from exemplar_ocr.domain.geometry import BBox, DetectedObject, ObjectClass, iou
from exemplar_ocr.utils.errors import ExportError, ValidationError, throw
from exemplar_ocr.utils.validators import validate_positive_int


class TokenSource(str, Enum):
    WORD_MATCH = "word_match"
    CHAR_FALLBACK = "char_fallback"
    CHAR_ONLY = "char_only"


@dataclass(frozen=True, eq=False)
class RecognitionConfig:
    char_index: ExemplarIndex
    word_index: Optional[ExemplarIndex] = None
    word_fallback_threshold: float = DEFAULT_WORD_FALLBACK_THRESHOLD
    insert_spaces: bool = True
    k: int = 1
    unreadable_threshold: float = DEFAULT_UNREADABLE_THRESHOLD
    unreadable_marker: str = UNREADABLE_MARKER

    def __post_init__(self):
        if self.char_index is None:
            throw("char_index is required", ValidationError)
        validate_positive_int(self.k, "k")
        if self.word_fallback_threshold < -1.0:
            throw("word_fallback_threshold must be >= -1", ValidationError)


@dataclass(frozen=True)
class RecognizedChar:
    text: str
    bbox: BBox
    similarity: Optional[float] = None


@dataclass(frozen=True)
class RecognizedToken:
    text: str
    bbox: BBox
    source: TokenSource
    similarity: float
    level: ObjectClass = ObjectClass.WORD
    chars: Tuple[RecognizedChar, ...] = ()
    # Word-index match kept below the threshold because the word had no char crops.
    low_confidence: bool = False

    def translate(self, dx: float, dy: float) -> RecognizedToken:
        return RecognizedToken(
            text=self.text,
            bbox=self.bbox.translate(dx, dy),
            source=self.source,
            similarity=self.similarity,
            level=self.level,
            chars=tuple(
                RecognizedChar(c.text, c.bbox.translate(dx, dy), c.similarity) for c in self.chars
            ),
            low_confidence=self.low_confidence,
        )


@dataclass(frozen=True)
class Encoders:
    word: Encoder
    char: Encoder


def assign_chars(
    words: Sequence[BBox],
    chars: Sequence[BBox],
    orientation: Orientation = Orientation.HORIZONTAL,
) -> Tuple[Dict[int, List[int]], List[int]]:
    """Map each word index to its ordered char indices; chars inside no word are orphans.

    A char goes to the word containing its center; among several, the highest IoU wins
    (ties: lower word index).
    """
    assigned: Dict[int, List[int]] = {i: [] for i in range(len(words))}
    orphans: List[int] = []
    for ci, char in enumerate(chars):
        cx, cy = char.center
        containing = [wi for wi, word in enumerate(words) if word.contains_point(cx, cy)]
        if not containing:
            orphans.append(ci)
            continue
        best = max(containing, key=lambda wi: (iou(words[wi], char), -wi))
        assigned[best].append(ci)

    for wi in assigned:
        assigned[wi].sort(key=lambda ci: (*reading_order_key(chars[ci], orientation), ci))
    orphans.sort(key=lambda ci: (*reading_order_key(chars[ci], orientation), ci))
    return assigned, orphans


def _recognize_chars(
    embeddings: Sequence[Embedding],
    boxes: Sequence[BBox],
    cfg: RecognitionConfig,
    fingerprint: str,
) -> List[RecognizedChar]:
    k = min(cfg.k, len(cfg.char_index))
    recognized = []
    for embedding, bbox in zip(embeddings, boxes):
        top = query(cfg.char_index, embedding, k, fingerprint=fingerprint)[0]
        text = top.label if top.similarity >= cfg.unreadable_threshold else cfg.unreadable_marker
        recognized.append(RecognizedChar(text, bbox, top.similarity))
    return recognized


def _decide_word(
    bbox: BBox,
    word_embedding: Optional[Embedding],
    chars: Sequence[RecognizedChar],
    cfg: RecognitionConfig,
    word_fingerprint: Optional[str],
) -> RecognizedToken:
    if cfg.word_index is None or word_embedding is None:
        if not chars:
            return RecognizedToken(cfg.unreadable_marker, bbox, TokenSource.CHAR_ONLY, -1.0)
        return RecognizedToken(
            text="".join(c.text for c in chars),
            bbox=bbox,
            source=TokenSource.CHAR_ONLY,
            similarity=min(c.similarity for c in chars),
            chars=tuple(chars),
        )

    k = min(cfg.k, len(cfg.word_index))
    top = query(cfg.word_index, word_embedding, k, fingerprint=word_fingerprint)[0]
    if top.similarity >= cfg.word_fallback_threshold or not chars:
        return RecognizedToken(
            text=top.label,
            bbox=bbox,
            source=TokenSource.WORD_MATCH,
            similarity=top.similarity,
            chars=_label_chars(top.label, chars),
            low_confidence=top.similarity < cfg.word_fallback_threshold,
        )
    return RecognizedToken(
        text="".join(c.text for c in chars),
        bbox=bbox,
        source=TokenSource.CHAR_FALLBACK,
        similarity=min(c.similarity for c in chars),
        chars=tuple(chars),
    )


def _label_chars(label: str, chars: Sequence[RecognizedChar]) -> Tuple[RecognizedChar, ...]:
    """Char boxes of a whole-word match carry the word's letters only when counts line up."""
    if len(label) == len(chars):
        return tuple(RecognizedChar(letter, c.bbox, c.similarity) for letter, c in zip(label, chars))
    return tuple(RecognizedChar("", c.bbox, c.similarity) for c in chars)


def recognize_word(
    crop: ImageCrop,
    char_crops: Sequence[ImageCrop],
    cfg: RecognitionConfig,
    encoders: Union[Encoders, Encoder],
    *,
    bbox: Optional[BBox] = None,
    char_boxes: Optional[Sequence[BBox]] = None,
) -> RecognizedToken:
    """Word-index match when top-1 >= threshold, else the concatenated char matches."""
    if not isinstance(encoders, Encoders):
        encoders = Encoders(word=encoders, char=encoders)
    bbox = bbox or BBox(0.0, 0.0, float(crop.width), float(crop.height))
    if char_boxes is None:
        char_boxes = [BBox(0.0, 0.0, float(c.width), float(c.height)) for c in char_crops]

    word_embedding = None
    if cfg.word_index is not None:
        word_embedding = embed_batch([crop], encoders.word)[0]

    chars: List[RecognizedChar] = []
    if char_crops:
        char_embeddings = embed_batch(char_crops, encoders.char)
        chars = _recognize_chars(char_embeddings, char_boxes, cfg, encoders.char.fingerprint)
    return _decide_word(bbox, word_embedding, chars, cfg, encoders.word.fingerprint)


def recognize_line(
    line: ImageCrop,
    words: Sequence[DetectedObject],
    chars: Sequence[DetectedObject],
    cfg: RecognitionConfig,
    encoders: Union[Encoders, Encoder],
    orientation: Orientation = Orientation.HORIZONTAL,
) -> List[RecognizedToken]:
    """Tokens of one line in reading order, boxes in line-local coordinates.

    Crops are embedded in two batches (words, chars); batching does not change embeddings, so
    the result equals calling recognize_word per word.
    """
    if not isinstance(encoders, Encoders):
        encoders = Encoders(word=encoders, char=encoders)
    word_boxes = [w.bbox for w in words]
    char_boxes = [c.bbox for c in chars]
    assigned, orphans = assign_chars(word_boxes, char_boxes, orientation)

    recognized_chars: List[RecognizedChar] = []
    if char_boxes:
        char_embeddings = embed_batch([line.crop(b) for b in char_boxes], encoders.char)
        recognized_chars = _recognize_chars(char_embeddings, char_boxes, cfg, encoders.char.fingerprint)

    word_embeddings: List[Optional[Embedding]] = [None] * len(word_boxes)
    if word_boxes and cfg.word_index is not None:
        word_embeddings = list(embed_batch([line.crop(b) for b in word_boxes], encoders.word))

    tokens: List[RecognizedToken] = []
    for wi, bbox in enumerate(word_boxes):
        members = [recognized_chars[ci] for ci in assigned[wi]]
        tokens.append(_decide_word(bbox, word_embeddings[wi], members, cfg, encoders.word.fingerprint))
    for ci in orphans:
        char = recognized_chars[ci]
        tokens.append(
            RecognizedToken(
                text=char.text,
                bbox=char.bbox,
                source=TokenSource.CHAR_ONLY,
                similarity=char.similarity,
                level=ObjectClass.CHAR,
                chars=(char,),
            )
        )

    tokens.sort(key=lambda t: (*reading_order_key(t.bbox, orientation), t.text))
    return tokens


def export_hard_negatives(
    labeled: Sequence[Tuple[ImageCrop, str]],
    index: ExemplarIndex,
    encoder: Encoder,
    k: int,
) -> List[Tuple[str, List[str]]]:
    """Per labeled crop: retrieved labels other than gold, rank order kept, duplicates dropped."""
    if not labeled:
        throw("labeled crops must not be empty", ValidationError)
    embeddings = embed_batch([crop for crop, _ in labeled], encoder)
    records: List[Tuple[str, List[str]]] = []
    for (_, gold), embedding in zip(labeled, embeddings):
        confused: List[str] = []
        for match in query(index, embedding, k, fingerprint=encoder.fingerprint):
            if match.label != gold and match.label not in confused:
                confused.append(match.label)
        records.append((gold, confused))
    return records


HARD_NEGATIVE_SEPARATORS = (",", "\t", "\n", "\r")


def write_hard_negatives(records: Sequence[Tuple[str, Sequence[str]]], path: Union[str, Path]) -> None:
    """One record per line: gold<TAB>label1,label2,...

    Labels containing a comma, tab or line break cannot be written unambiguously and raise
    ValidationError before anything is written.
    """
    for gold, confused in records:
        for label in (gold, *confused):
            if any(sep in label for sep in HARD_NEGATIVE_SEPARATORS):
                throw(f"label {label!r} contains a record separator", ValidationError, label=label)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            for gold, confused in records:
                handle.write(f"{gold}\t{','.join(confused)}\n")
    except OSError as exc:
        raise ExportError(f"hard negatives could not be written: {path} ({exc})", path=str(path))
