"""Image crops to unit-norm embeddings (stub encoder and ONNX model files)."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Protocol, Sequence, Union

import numpy as np
import onnxruntime as ort

from exemplar_ocr.config.specs import EncoderKind, EncoderSpec
from exemplar_ocr.domain.geometry import BBox
from exemplar_ocr.utils.errors import ModelLoadError, ShapeMismatch, ValidationError, throw
from exemplar_ocr.utils.imaging import pad_to_square, resize_bilinear

UNIT_NORM_TOLERANCE = 1e-6
DEGENERATE_NORM = 1e-8


@dataclass(frozen=True)
class Provenance:
    """Where a crop came from; bbox is the crop's rectangle in page coordinates."""

    page_id: str
    file_name: Optional[str] = None
    line_index: Optional[int] = None
    word_index: Optional[int] = None
    char_index: Optional[int] = None
    bbox: Optional[BBox] = None


@dataclass(frozen=True, eq=False)
class ImageCrop:
    pixels: np.ndarray
    provenance: Optional[Provenance] = None

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=np.float32)
        if pixels.ndim != 2 or pixels.size == 0:
            throw("crop pixels must be a nonempty 2-D array", ValidationError, shape=pixels.shape)
        if not np.all(np.isfinite(pixels)) or float(pixels.min()) < 0.0 or float(pixels.max()) > 1.0:
            throw("crop pixel values must lie in [0, 1]", ValidationError)
        object.__setattr__(self, "pixels", pixels)

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    def crop(self, bbox: BBox, provenance: Optional[Provenance] = None) -> ImageCrop:
        """Cut a sub-crop; bbox is in this crop's coordinates and rasterized floor/ceil."""
        x0, y0, x1, y1 = bbox.to_pixels()
        x0, y0 = max(x0, 0), max(y0, 0)
        x1, y1 = min(x1, self.width), min(y1, self.height)
        if x1 <= x0 or y1 <= y0:
            throw("crop box lies outside the image", ValidationError, box=bbox.sort_key())
        return ImageCrop(self.pixels[y0:y1, x0:x1], provenance)


@dataclass(frozen=True, eq=False)
class Embedding:
    vector: np.ndarray

    def __post_init__(self):
        vector = np.asarray(self.vector, dtype=np.float32)
        if vector.ndim != 1 or vector.size == 0:
            throw("embedding must be a nonempty 1-D vector", ValidationError)
        norm = float(np.linalg.norm(vector.astype(np.float64)))
        if abs(norm - 1.0) > UNIT_NORM_TOLERANCE:
            throw("embedding must be unit-norm", ValidationError, norm=norm)
        object.__setattr__(self, "vector", vector)

    @property
    def dim(self) -> int:
        return int(self.vector.shape[0])

    @classmethod
    def degenerate(cls, dim: int) -> Embedding:
        """The e0 unit vector emitted for crops with no contrast."""
        vector = np.zeros(dim, dtype=np.float32)
        vector[0] = 1.0
        return cls(vector)

    @classmethod
    def normalize(cls, raw: np.ndarray) -> Embedding:
        raw = np.asarray(raw, dtype=np.float64).reshape(-1)
        norm = float(np.linalg.norm(raw))
        if not np.isfinite(norm) or norm < DEGENERATE_NORM:
            return cls.degenerate(raw.shape[0])
        return cls((raw / norm).astype(np.float32))


def preprocess(crop: ImageCrop, spec: EncoderSpec) -> np.ndarray:
    """Pad to a white square, bilinear-resize to spec.input_size, then (x - mean) / std."""
    height, width = spec.input_size
    square = pad_to_square(crop.pixels, fill=1.0)
    resized = resize_bilinear(square, height, width)
    return ((resized - spec.mean[0]) / spec.std[0]).astype(np.float32)


def encoder_fingerprint(spec: EncoderSpec) -> str:
    """Hash of everything that changes embeddings: spec fields and the model file bytes."""
    payload = {
        "kind": spec.kind.value,
        "input_size": list(spec.input_size),
        "mean": list(spec.mean),
        "std": list(spec.std),
        "dim": spec.dim,
    }
    digest = hashlib.sha256(json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8"))
    if spec.kind == EncoderKind.MODEL_FILE:
        digest.update(_file_digest(spec.model_path).encode("ascii"))
    return digest.hexdigest()


def _file_digest(path: Optional[str]) -> str:
    digest = hashlib.sha256()
    try:
        with open(path, "rb") as handle:
            for chunk in iter(lambda: handle.read(1 << 20), b""):
                digest.update(chunk)
        return digest.hexdigest()
    except (OSError, TypeError) as exc:
        raise ModelLoadError(f"model file could not be read: {path} ({exc})", path=str(path))


class Encoder(Protocol):
    spec: EncoderSpec
    fingerprint: str

    def embed(self, crop: ImageCrop) -> Embedding: ...


class StubEncoder:
    """Deterministic built-in: flatten, subtract the mean, L2-normalize (e0 when flat)."""

    def __init__(self, spec: EncoderSpec):
        if spec.kind != EncoderKind.STUB:
            throw("StubEncoder needs a stub spec", ValidationError)
        self.spec = spec
        self.fingerprint = encoder_fingerprint(spec)

    def embed(self, crop: ImageCrop) -> Embedding:
        values = preprocess(crop, self.spec).astype(np.float64).reshape(-1)
        return Embedding.normalize(values - values.mean())


class OnnxEncoder:
    """ONNX model: input 1x1xHxW float32, output 1xdim float32, normalized here."""

    def __init__(self, spec: EncoderSpec):
        if spec.kind != EncoderKind.MODEL_FILE:
            throw("OnnxEncoder needs a model_file spec", ValidationError)
        self.spec = spec
        self.fingerprint = encoder_fingerprint(spec)
        self._session = load_onnx_session(spec.model_path)
        self._input_name = self._session.get_inputs()[0].name

    def embed(self, crop: ImageCrop) -> Embedding:
        tensor = preprocess(crop, self.spec)[np.newaxis, np.newaxis, :, :]
        try:
            outputs = self._session.run(None, {self._input_name: tensor})
        except Exception as exc:
            raise ModelLoadError(f"encoder inference failed: {exc}", path=self.spec.model_path)
        raw = np.asarray(outputs[0], dtype=np.float32).reshape(-1)
        if raw.shape[0] != self.spec.dim:
            raise ShapeMismatch(
                f"encoder produced {raw.shape[0]} values, spec says {self.spec.dim}",
                expected=self.spec.dim,
                actual=int(raw.shape[0]),
            )
        return Embedding.normalize(raw)


def load_onnx_session(model_path: Optional[str]):
    """Create a CPU InferenceSession; sessions are safe for concurrent run() calls."""
    if not model_path or not Path(model_path).is_file():
        raise ModelLoadError(f"model file not found: {model_path}", path=str(model_path))
    try:
        return ort.InferenceSession(str(model_path), providers=["CPUExecutionProvider"])
    except Exception as exc:
        raise ModelLoadError(f"model file could not be loaded: {model_path} ({exc})", path=str(model_path))


def build_encoder(spec: EncoderSpec) -> Encoder:
    if spec.kind == EncoderKind.MODEL_FILE:
        return OnnxEncoder(spec)
    return StubEncoder(spec)


def embed_batch(crops: Sequence[ImageCrop], encoder: Union[Encoder, EncoderSpec]) -> List[Embedding]:
    """One embedding per crop, in input order; items are embedded independently."""
    if not crops:
        throw("embed_batch needs at least one crop", ValidationError)
    if isinstance(encoder, EncoderSpec):
        encoder = build_encoder(encoder)
    return [encoder.embed(crop) for crop in crops]
