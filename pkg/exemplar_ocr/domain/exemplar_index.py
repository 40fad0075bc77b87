"""Offline dictionary of font-rendered exemplar embeddings and exact cosine retrieval."""

from __future__ import annotations

import os
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from exemplar_ocr.config.specs import EncoderSpec
from exemplar_ocr.domain.encoder import Embedding, Encoder, ImageCrop, build_encoder, embed_batch
from exemplar_ocr.domain.rendering import FontPath, font_ids_for, render_exemplar
from exemplar_ocr.utils.errors import (
    CorruptIndex,
    DimensionMismatch,
    EmptyIndex,
    ExportError,
    FingerprintMismatch,
    MissingGlyph,
    ValidationError,
    VersionMismatch,
    throw,
)
from exemplar_ocr.utils.imaging import save_png
from exemplar_ocr.utils.logger import logger
from exemplar_ocr.utils.validators import validate_label

INDEX_MAGIC = b"EFXI"
INDEX_FORMAT_VERSION = 1
METRIC = "cosine"

_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


@dataclass(frozen=True, eq=False)
class Exemplar:
    label: str
    font_id: str
    embedding: Embedding


@dataclass(frozen=True)
class Match:
    label: str
    font_id: str
    similarity: float


@dataclass(frozen=True, eq=False)
class ExemplarIndex:
    """Immutable after construction; safe for concurrent queries."""

    dim: int
    encoder_fingerprint: str
    labels: Tuple[str, ...]
    font_ids: Tuple[str, ...]
    vectors: np.ndarray
    _tie_rank: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if vectors.ndim != 2 or vectors.shape[1] != self.dim:
            throw("vectors must be an (n, dim) matrix", ValidationError, shape=vectors.shape)
        if not (len(self.labels) == len(self.font_ids) == vectors.shape[0]):
            throw("labels, font_ids and vectors must have equal length", ValidationError)
        for label in self.labels:
            validate_label(label)
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)

        # Ties: lower code point sequence of label, then lexicographic font_id.
        ordered = sorted(range(len(self.labels)), key=lambda i: (self.labels[i], self.font_ids[i], i))
        rank = np.empty(len(ordered), dtype=np.int64)
        rank[ordered] = np.arange(len(ordered))
        object.__setattr__(self, "_tie_rank", rank)

    @property
    def metric(self) -> str:
        return METRIC

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def entries(self) -> Iterator[Exemplar]:
        for label, font_id, vector in zip(self.labels, self.font_ids, self.vectors):
            yield Exemplar(label, font_id, Embedding(vector))

    @classmethod
    def from_exemplars(cls, exemplars: Sequence[Exemplar], encoder_fingerprint: str) -> ExemplarIndex:
        if not exemplars:
            raise EmptyIndex()
        dims = {e.embedding.dim for e in exemplars}
        if len(dims) != 1:
            throw("exemplars must share one dimension", DimensionMismatch, dims=sorted(dims))
        return cls(
            dim=dims.pop(),
            encoder_fingerprint=encoder_fingerprint,
            labels=tuple(e.label for e in exemplars),
            font_ids=tuple(e.font_id for e in exemplars),
            vectors=np.stack([e.embedding.vector for e in exemplars]),
        )


def build_index(
    encoder: Union[EncoderSpec, Encoder],
    labels: Sequence[str],
    fonts: Sequence[FontPath],
    canvas: int,
    *,
    render_dir: Optional[Union[str, Path]] = None,
) -> ExemplarIndex:
    """One exemplar per (label, font) that renders; order is label order, then font order."""
    if not labels:
        throw("labels must not be empty", ValidationError)
    if isinstance(encoder, EncoderSpec):
        encoder = build_encoder(encoder)

    crops: List[ImageCrop] = []
    keys: List[Tuple[str, str]] = []
    skipped = 0
    font_ids = font_ids_for(fonts)
    for label in labels:
        validate_label(label)
        for font_path, font_id in zip(fonts, font_ids):
            try:
                crop = render_exemplar(font_path, label, canvas)
            except MissingGlyph as exc:
                skipped += 1
                logger("exemplar_index").info("skip %r: %s", label, exc)
                continue
            crops.append(crop)
            keys.append((label, font_id))
            if render_dir is not None:
                _save_render(crop, Path(render_dir), label, font_id)

    if not crops:
        raise EmptyIndex("no (label, font) pair rendered", labels=len(labels), fonts=len(fonts))

    embeddings = embed_batch(crops, encoder)
    index = ExemplarIndex.from_exemplars(
        [Exemplar(label, font_id, emb) for (label, font_id), emb in zip(keys, embeddings)],
        encoder.fingerprint,
    )
    collisions = duplicate_label_groups(index)
    if collisions:
        logger("exemplar_index").warning(
            "labels with identical embeddings: %s",
            "; ".join(" ".join(group) for group in collisions),
        )
    logger("exemplar_index").info("built index: %d entries, %d skipped renders", len(index), skipped)
    return index


def _save_render(crop: ImageCrop, render_dir: Path, label: str, font_id: str) -> None:
    name = "_".join(f"U+{ord(ch):04X}" for ch in label)
    target = render_dir / font_id
    try:
        target.mkdir(parents=True, exist_ok=True)
        save_png(crop.pixels, target / f"{name}.png")
    except OSError as exc:
        raise ExportError(f"render could not be saved: {target} ({exc})", path=str(target))


def duplicate_label_groups(index: ExemplarIndex) -> List[Tuple[str, ...]]:
    """Groups of distinct labels whose embeddings are bit-identical."""
    by_vector: Dict[bytes, set] = {}
    for label, vector in zip(index.labels, index.vectors):
        by_vector.setdefault(vector.tobytes(), set()).add(label)
    groups = {tuple(sorted(labels)) for labels in by_vector.values() if len(labels) > 1}
    return sorted(groups)


def _check_query(index: ExemplarIndex, q: Embedding, k: int, fingerprint: Optional[str]) -> None:
    if len(index) == 0:
        raise EmptyIndex()
    if q.dim != index.dim:
        raise DimensionMismatch(
            f"query has dim {q.dim}, index has dim {index.dim}", expected=index.dim, actual=q.dim
        )
    if fingerprint is not None and fingerprint != index.encoder_fingerprint:
        raise FingerprintMismatch(expected=index.encoder_fingerprint, actual=fingerprint)
    if isinstance(k, bool) or not isinstance(k, int) or k < 1:
        throw("k must be a positive integer", ValidationError, k=k)


def similarities(index: ExemplarIndex, q: Embedding) -> np.ndarray:
    return index.vectors.astype(np.float64) @ q.vector.astype(np.float64)


def _ranked(index: ExemplarIndex, sims: np.ndarray) -> np.ndarray:
    # lexsort: last key is primary.
    return np.lexsort((index._tie_rank, -sims))


def query(
    index: ExemplarIndex,
    q: Embedding,
    k: int,
    *,
    fingerprint: Optional[str] = None,
) -> List[Match]:
    """Exact top-k by cosine similarity (a full scan), similarity descending."""
    _check_query(index, q, k, fingerprint)
    if k > len(index):
        throw("k exceeds the number of entries", ValidationError, k=k, entries=len(index))
    sims = similarities(index, q)
    order = _ranked(index, sims)[:k]
    return [Match(index.labels[i], index.font_ids[i], float(np.clip(sims[i], -1.0, 1.0))) for i in order]


def query_labels(
    index: ExemplarIndex,
    q: Embedding,
    k: int,
    *,
    fingerprint: Optional[str] = None,
) -> List[Match]:
    """Top-k distinct labels, each scored by its best font."""
    _check_query(index, q, k, fingerprint)
    sims = similarities(index, q)
    seen: set = set()
    matches: List[Match] = []
    for i in _ranked(index, sims):
        label = index.labels[i]
        if label in seen:
            continue
        seen.add(label)
        matches.append(Match(label, index.font_ids[i], float(np.clip(sims[i], -1.0, 1.0))))
        if len(matches) == k:
            break
    return matches


def _pack_str(value: str) -> bytes:
    data = value.encode("utf-8")
    return _U32.pack(len(data)) + data


def index_to_bytes(index: ExemplarIndex) -> bytes:
    parts = [
        INDEX_MAGIC,
        _U32.pack(INDEX_FORMAT_VERSION),
        _U32.pack(index.dim),
        _U64.pack(len(index)),
        _pack_str(index.encoder_fingerprint),
    ]
    vectors = index.vectors.astype("<f4", copy=False)
    for label, font_id, vector in zip(index.labels, index.font_ids, vectors):
        parts.append(_pack_str(label))
        parts.append(_pack_str(font_id))
        parts.append(vector.tobytes())
    body = b"".join(parts)
    return body + _U32.pack(zlib.crc32(body) & 0xFFFFFFFF)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self.data):
            raise CorruptIndex("index file is truncated", offset=self.offset)
        chunk = self.data[self.offset : end]
        self.offset = end
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def u64(self) -> int:
        return _U64.unpack(self.take(8))[0]

    def text(self) -> str:
        raw = self.take(self.u32())
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            raise CorruptIndex("index string is not UTF-8", offset=self.offset)


def index_from_bytes(data: bytes) -> ExemplarIndex:
    if len(data) < len(INDEX_MAGIC) or data[: len(INDEX_MAGIC)] != INDEX_MAGIC:
        raise CorruptIndex("bad magic")
    reader = _Reader(data)
    reader.take(len(INDEX_MAGIC))
    version = reader.u32()
    if version != INDEX_FORMAT_VERSION:
        raise VersionMismatch(
            f"index format version {version}, expected {INDEX_FORMAT_VERSION}",
            version=version,
        )
    if len(data) < reader.offset + 4:
        raise CorruptIndex("index file is truncated")
    body, trailer = data[:-4], data[-4:]
    if zlib.crc32(body) & 0xFFFFFFFF != _U32.unpack(trailer)[0]:
        raise CorruptIndex("checksum mismatch")

    reader = _Reader(body)
    reader.take(len(INDEX_MAGIC) + 4)
    dim = reader.u32()
    count = reader.u64()
    fingerprint = reader.text()
    if dim == 0 or count == 0:
        raise CorruptIndex("index header declares no entries", dim=dim, count=count)
    if count * (8 + 4 * dim) > len(body) - reader.offset:
        raise CorruptIndex("index header declares more entries than the file holds", count=count)
    labels: List[str] = []
    font_ids: List[str] = []
    vectors = np.empty((count, dim), dtype=np.float32)
    for row in range(count):
        labels.append(reader.text())
        font_ids.append(reader.text())
        vectors[row] = np.frombuffer(reader.take(4 * dim), dtype="<f4")
    if reader.offset != len(body):
        raise CorruptIndex("trailing bytes after the last entry", offset=reader.offset)
    try:
        return ExemplarIndex(dim, fingerprint, tuple(labels), tuple(font_ids), vectors)
    except ValidationError as exc:
        raise CorruptIndex(f"index content is invalid: {exc}")


def save_index(index: ExemplarIndex, path: Union[str, Path]) -> None:
    path = Path(path)
    tmp_path = path.with_name(path.name + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp_path.write_bytes(index_to_bytes(index))
        os.replace(tmp_path, path)
    except OSError as exc:
        raise ExportError(f"index could not be written: {path} ({exc})", path=str(path))


def load_index(path: Union[str, Path]) -> ExemplarIndex:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CorruptIndex(f"index file could not be read: {path} ({exc})", path=str(path))
    return index_from_bytes(data)
