"""Configuration models for encoders, detectors, recognition and the pipeline.

Every model rejects unknown keys; a config file mirrors `PipelineConfig` field for field.
"""

from __future__ import annotations

import copy
import json
import os
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from exemplar_ocr.domain.assembly import Orientation
from exemplar_ocr.domain.geometry import ObjectClass
from exemplar_ocr.utils.errors import ConfigError

MODEL_DIR_ENV = "EFFOCR_MODEL_DIR"
DEFAULT_CONF_THRESH = 0.25
DEFAULT_IOU_THRESH = 0.45
DEFAULT_WORD_FALLBACK_THRESHOLD = 0.82
DEFAULT_UNREADABLE_THRESHOLD = 0.05
UNREADABLE_MARKER = "□"

# Config keys holding file paths, resolved against the config directory then EFFOCR_MODEL_DIR.
PATH_KEYS = {"model_path", "annotation_path", "char_index_path", "word_index_path", "font_path"}


class EncoderKind(str, Enum):
    STUB = "stub"
    MODEL_FILE = "model_file"


class DetectorKind(str, Enum):
    MODEL_FILE = "model_file"
    GROUND_TRUTH = "ground_truth"


class ConfidenceMode(str, Enum):
    PRODUCT = "product"
    CLASS = "class"


class _FrozenModel(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", use_enum_values=False)


class EncoderSpec(_FrozenModel):
    kind: EncoderKind = EncoderKind.STUB
    input_size: Tuple[int, int] = (16, 16)
    mean: Tuple[float, ...] = (0.0,)
    std: Tuple[float, ...] = (1.0,)
    model_path: Optional[str] = None
    dim: int = Field(default=256, gt=0)

    @field_validator("input_size")
    @classmethod
    def _positive_size(cls, value: Tuple[int, int]) -> Tuple[int, int]:
        if value[0] <= 0 or value[1] <= 0:
            raise ValueError("input_size entries must be positive")
        return value

    @field_validator("std")
    @classmethod
    def _nonzero_std(cls, value: Tuple[float, ...]) -> Tuple[float, ...]:
        if not value or any(s == 0 for s in value):
            raise ValueError("std entries must be nonzero")
        return value

    @field_validator("mean")
    @classmethod
    def _mean_present(cls, value: Tuple[float, ...]) -> Tuple[float, ...]:
        if not value:
            raise ValueError("mean needs at least one channel")
        return value

    @model_validator(mode="after")
    def _kind_rules(self) -> EncoderSpec:
        if self.kind == EncoderKind.MODEL_FILE and not self.model_path:
            raise ValueError("model_path is required for model_file encoders")
        if self.kind == EncoderKind.STUB:
            if self.model_path:
                raise ValueError("model_path is only allowed for model_file encoders")
            if self.dim != self.input_size[0] * self.input_size[1]:
                raise ValueError("stub encoder dim must equal input height x width")
        return self


class DetectorSpec(_FrozenModel):
    kind: DetectorKind
    model_path: Optional[str] = None
    annotation_path: Optional[str] = None
    conf_thresh: float = Field(default=DEFAULT_CONF_THRESH, ge=0.0, le=1.0)
    iou_thresh: float = Field(default=DEFAULT_IOU_THRESH, ge=0.0, le=1.0)
    input_size: Tuple[int, int] = (640, 640)
    classes: Tuple[ObjectClass, ...] = (ObjectClass.LINE, ObjectClass.WORD, ObjectClass.CHAR)
    conf_mode: ConfidenceMode = ConfidenceMode.PRODUCT

    @field_validator("classes")
    @classmethod
    def _classes_nonempty(cls, value: Tuple[ObjectClass, ...]) -> Tuple[ObjectClass, ...]:
        if not value:
            raise ValueError("classes must not be empty")
        return value

    @field_validator("input_size")
    @classmethod
    def _positive_size(cls, value: Tuple[int, int]) -> Tuple[int, int]:
        if value[0] <= 0 or value[1] <= 0:
            raise ValueError("input_size entries must be positive")
        return value

    @model_validator(mode="after")
    def _kind_rules(self) -> DetectorSpec:
        if self.kind == DetectorKind.MODEL_FILE and not self.model_path:
            raise ValueError("model_path is required for model_file detectors")
        return self


class RecognitionSettings(_FrozenModel):
    char_index_path: str
    word_index_path: Optional[str] = None
    word_fallback_threshold: float = Field(default=DEFAULT_WORD_FALLBACK_THRESHOLD, ge=-1.0)
    insert_spaces: bool = True
    k: int = Field(default=1, ge=1)
    unreadable_threshold: float = Field(default=DEFAULT_UNREADABLE_THRESHOLD, ge=-1.0, le=1.0)
    unreadable_marker: str = UNREADABLE_MARKER


class PipelineConfig(_FrozenModel):
    line_detector: DetectorSpec
    localizer: DetectorSpec
    word_encoder: Optional[EncoderSpec] = None
    char_encoder: EncoderSpec = EncoderSpec()
    recognition: RecognitionSettings
    orientation: Orientation = Orientation.HORIZONTAL
    no_words: bool = False
    workers: int = Field(default=1, ge=1)
    queue_capacity: int = Field(default=8, ge=1)
    font_path: Optional[str] = None

    @model_validator(mode="after")
    def _layout_rules(self) -> PipelineConfig:
        if self.orientation == Orientation.VERTICAL and not self.no_words:
            raise ValueError("vertical orientation requires no_words")
        return self

    @property
    def effective_word_encoder(self) -> EncoderSpec:
        return self.word_encoder or self.char_encoder

    @property
    def uses_word_index(self) -> bool:
        return bool(self.recognition.word_index_path) and not self.no_words


def resolve_model_path(value: str, base_dir: Optional[Path] = None) -> str:
    """Resolve a relative path against base_dir first, then EFFOCR_MODEL_DIR."""
    path = Path(value).expanduser()
    if path.is_absolute():
        return str(path)
    if base_dir is not None and (base_dir / path).exists():
        return str(base_dir / path)
    model_dir = os.environ.get(MODEL_DIR_ENV)
    if model_dir and (Path(model_dir) / path).exists():
        return str(Path(model_dir) / path)
    if base_dir is not None:
        return str(base_dir / path)
    return str(path)


def _resolve_paths(node: Any, base_dir: Optional[Path]) -> Any:
    if isinstance(node, dict):
        resolved = {}
        for key, value in node.items():
            if key in PATH_KEYS and isinstance(value, str) and value:
                resolved[key] = resolve_model_path(value, base_dir)
            else:
                resolved[key] = _resolve_paths(value, base_dir)
        return resolved
    if isinstance(node, list):
        return [_resolve_paths(item, base_dir) for item in node]
    return node


def deep_merge(base: Mapping[str, Any], overrides: Mapping[str, Any]) -> Dict[str, Any]:
    """Return base with overrides applied recursively; override values win."""
    merged: Dict[str, Any] = copy.deepcopy(dict(base))
    for key, value in overrides.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as handle:
            data = json.load(handle)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}", path=str(path))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"config file is not valid UTF-8 JSON: {path} ({exc})", path=str(path))
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object", path=str(path))
    return data


def build_pipeline_config(
    data: Mapping[str, Any],
    *,
    base_dir: Optional[Path] = None,
) -> PipelineConfig:
    try:
        return PipelineConfig.model_validate(_resolve_paths(dict(data), base_dir))
    except ValidationError as exc:
        raise ConfigError(_format_validation_error(exc), errors=[_loc(err) for err in exc.errors()])


def load_pipeline_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    *,
    base: Optional[Mapping[str, Any]] = None,
) -> PipelineConfig:
    """Layer base (e.g. a preset), then the config file, then overrides, and validate."""
    data: Dict[str, Any] = dict(base or {})
    base_dir = None
    if path is not None:
        data = deep_merge(data, read_config_file(path))
        base_dir = Path(path).resolve().parent
    if overrides:
        data = deep_merge(data, overrides)
    return build_pipeline_config(data, base_dir=base_dir)


def load_encoder_spec(path: Optional[Union[str, Path]] = None, level: str = "char") -> EncoderSpec:
    """The char or word encoder section of a config file; the built-in stub when there is none."""
    if path is None:
        return EncoderSpec()
    data = read_config_file(path)
    section = data.get(f"{level}_encoder") or data.get("char_encoder") or {}
    try:
        return EncoderSpec.model_validate(_resolve_paths(section, Path(path).resolve().parent))
    except ValidationError as exc:
        raise ConfigError(_format_validation_error(exc), errors=[_loc(err) for err in exc.errors()])


def _loc(err: Mapping[str, Any]) -> str:
    return ".".join(str(part) for part in err.get("loc", ())) or "$"


def _format_validation_error(exc: ValidationError) -> str:
    parts = [f"{_loc(err)}: {err.get('msg')}" for err in exc.errors()]
    return "invalid configuration: " + "; ".join(parts)
