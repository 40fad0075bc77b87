"""Character and word error rates."""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import Levenshtein

from exemplar_ocr.utils.errors import AllGoldEmpty, ValidationError, throw

# Words are scored as single code points from a private use plane.
_WORD_CODEPOINT_BASE = 0xF0000


def levenshtein(a: str, b: str) -> int:
    """Edit distance over Unicode code points."""
    return Levenshtein.distance(a, b)


def word_distance(a: str, b: str) -> Tuple[int, int]:
    """(edit distance over whitespace-split words, number of gold words in b)."""
    vocabulary: Dict[str, str] = {}
    words_a, words_b = a.split(), b.split()
    for word in words_a + words_b:
        if word not in vocabulary:
            vocabulary[word] = chr(_WORD_CODEPOINT_BASE + len(vocabulary))
    encoded_a = "".join(vocabulary[w] for w in words_a)
    encoded_b = "".join(vocabulary[w] for w in words_b)
    return Levenshtein.distance(encoded_a, encoded_b), len(words_b)


def normalize_text(text: str, ignore_whitespace: bool = False) -> str:
    text = unicodedata.normalize("NFC", text)
    if ignore_whitespace:
        text = "".join(ch for ch in text if not ch.isspace())
    return text


@dataclass(frozen=True)
class EvalRecord:
    image_id: str
    prediction: str
    gold: str


@dataclass(frozen=True)
class RecordScore:
    image_id: str
    char_edits: int
    gold_chars: int
    word_edits: int
    gold_words: int
    prediction: str
    gold: str

    @property
    def cer(self) -> Optional[float]:
        return self.char_edits / self.gold_chars if self.gold_chars else None


@dataclass(frozen=True)
class EvalReport:
    cer: float
    wer: float
    count: int
    char_edits: int
    gold_chars: int
    word_edits: int
    gold_words: int
    empty_gold_count: int = 0
    records: Tuple[RecordScore, ...] = ()
    failed: Tuple[Tuple[str, str], ...] = field(default=())

    def as_dict(self) -> Dict[str, object]:
        return {
            "cer": self.cer,
            "wer": self.wer,
            "count": self.count,
            "char_edits": self.char_edits,
            "gold_chars": self.gold_chars,
            "word_edits": self.word_edits,
            "gold_words": self.gold_words,
            "empty_gold_count": self.empty_gold_count,
            "failed": [{"image_id": image_id, "reason": reason} for image_id, reason in self.failed],
            "records": [
                {
                    "image_id": r.image_id,
                    "char_edits": r.char_edits,
                    "gold_chars": r.gold_chars,
                    "cer": r.cer,
                    "word_edits": r.word_edits,
                    "gold_words": r.gold_words,
                }
                for r in self.records
            ],
        }


def score_record(record: EvalRecord, ignore_whitespace: bool = False) -> RecordScore:
    prediction = normalize_text(record.prediction, ignore_whitespace)
    gold = normalize_text(record.gold, ignore_whitespace)
    word_edits, gold_words = word_distance(
        unicodedata.normalize("NFC", record.prediction), unicodedata.normalize("NFC", record.gold)
    )
    return RecordScore(
        image_id=record.image_id,
        char_edits=levenshtein(prediction, gold),
        gold_chars=len(gold),
        word_edits=word_edits,
        gold_words=gold_words,
        prediction=record.prediction,
        gold=record.gold,
    )


def cer(
    records: Sequence[EvalRecord],
    ignore_whitespace: bool = False,
    *,
    failed: Sequence[Tuple[str, str]] = (),
) -> EvalReport:
    """Micro-averaged CER/WER; records with empty gold are counted but left out of the sums."""
    if not records:
        throw("records must not be empty", ValidationError)
    scores = [score_record(record, ignore_whitespace) for record in records]
    scored = [s for s in scores if s.gold_chars > 0]
    gold_chars = sum(s.gold_chars for s in scored)
    if gold_chars == 0:
        raise AllGoldEmpty(count=len(records))
    char_edits = sum(s.char_edits for s in scored)
    word_edits = sum(s.word_edits for s in scored)
    gold_words = sum(s.gold_words for s in scored)
    return EvalReport(
        cer=char_edits / gold_chars,
        wer=word_edits / gold_words if gold_words else 0.0,
        count=len(records),
        char_edits=char_edits,
        gold_chars=gold_chars,
        word_edits=word_edits,
        gold_words=gold_words,
        empty_gold_count=len(scores) - len(scored),
        records=tuple(scores),
        failed=tuple(failed),
    )
