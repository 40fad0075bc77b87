"""Named override bundles applied beneath a config file.

`latin` mirrors the word-model setup for alphabetic scripts (spaces between words, word index
with character fallback); the CJK presets recognize characters only.
"""

from __future__ import annotations

from typing import Any, Dict

from exemplar_ocr.utils.errors import ConfigError

PRESETS: Dict[str, Dict[str, Any]] = {
    "latin": {
        "orientation": "horizontal",
        "no_words": False,
        "recognition": {"insert_spaces": True},
    },
    "cjk-horizontal": {
        "orientation": "horizontal",
        "no_words": True,
        "recognition": {"insert_spaces": False},
    },
    "cjk-vertical": {
        "orientation": "vertical",
        "no_words": True,
        "recognition": {"insert_spaces": False},
    },
}


def get_preset(name: str) -> Dict[str, Any]:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose one of {sorted(PRESETS)}", preset=name)
