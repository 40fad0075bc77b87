"""Engine error hierarchy (single format for library and CLI callers)."""

from __future__ import annotations

from typing import Any, Dict, NoReturn, Optional


class OcrError(Exception):
    """Base class for every error the engine raises on purpose."""

    code = "ocr_error"
    default_message = "OCR engine error."

    def __init__(self, message: Optional[str] = None, **context: Any):
        super().__init__(message or self.default_message)
        self.context: Dict[str, Any] = context


class ValidationError(OcrError):
    code = "validation_error"
    default_message = "Invalid argument."


class DegenerateBox(ValidationError):
    code = "degenerate_box"
    default_message = "Box has zero width or height after clipping."


class ModelLoadError(OcrError):
    code = "model_load_error"
    default_message = "Model file could not be loaded."


class ShapeMismatch(OcrError):
    code = "shape_mismatch"
    default_message = "Model output shape does not match its spec."


class FontLoadError(OcrError):
    code = "font_load_error"
    default_message = "Font file could not be loaded."


class MissingGlyph(OcrError):
    code = "missing_glyph"
    default_message = "Font does not cover every codepoint of the text."


class EmptyIndex(OcrError):
    code = "empty_index"
    default_message = "Exemplar index has no entries."


class DimensionMismatch(OcrError):
    code = "dimension_mismatch"
    default_message = "Embedding dimension does not match the index."


class FingerprintMismatch(OcrError):
    code = "fingerprint_mismatch"
    default_message = "Index was built with a different encoder."


class CorruptIndex(OcrError):
    code = "corrupt_index"
    default_message = "Index file is corrupt."


class VersionMismatch(OcrError):
    code = "version_mismatch"
    default_message = "Index file format version is not supported."


class MissingAnnotation(OcrError):
    code = "missing_annotation"
    default_message = "No ground-truth annotation for this image."


class ImageLoadError(OcrError):
    code = "image_load_error"
    default_message = "Image could not be read."


class ConfigError(OcrError):
    code = "config_error"
    default_message = "Invalid configuration."


class SchemaError(OcrError):
    code = "schema_error"
    default_message = "COCO document does not match the expected schema."

    def __init__(self, message: Optional[str] = None, *, path: str = "$", **context: Any):
        super().__init__(f"{path}: {message or self.default_message}", path=path, **context)
        self.path = path


class ManifestError(OcrError):
    code = "manifest_error"
    default_message = "Evaluation manifest is invalid."


class AllGoldEmpty(OcrError):
    code = "all_gold_empty"
    default_message = "Every gold transcription is empty; CER is undefined."


class ExportError(OcrError):
    code = "io_error"
    default_message = "Results could not be written."


def throw(message: str, exc: type[OcrError] = ValidationError, **context: Any) -> NoReturn:
    raise exc(message, **context)


def error_payload(exc: BaseException) -> dict:
    """Render an exception as the payload printed by the CLI."""
    if isinstance(exc, OcrError):
        payload = {"code": exc.code, "message": str(exc)}
        payload.update({key: _jsonable(value) for key, value in exc.context.items()})
        return payload
    return {"code": "internal_error", "message": f"{type(exc).__name__}: {exc}"}


def _jsonable(value: Any) -> Any:
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, (list, tuple, set, frozenset)):
        return [_jsonable(item) for item in value]
    return str(value)
