"""Validation helpers for engine arguments."""

from __future__ import annotations

import math

from exemplar_ocr.utils.errors import ValidationError, throw


def validate_threshold(value: float, name: str, *, low: float = 0.0, high: float = 1.0) -> float:
    """Return value as float when it lies in [low, high]."""
    try:
        value = float(value)
    except (TypeError, ValueError):
        throw(f"{name} must be a number", ValidationError, field=name)
    if math.isnan(value) or value < low or value > high:
        throw(f"{name} must lie in [{low}, {high}]", ValidationError, field=name, value=value)
    return value


def validate_positive_int(value: int, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
        throw(f"{name} must be a positive integer", ValidationError, field=name, value=value)
    return value


def validate_label(label: str) -> str:
    if not isinstance(label, str) or not label:
        throw("label must be a nonempty string", ValidationError, field="label")
    return label
