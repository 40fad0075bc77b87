"""Evaluation runs: infer every manifest image and score it against its gold text."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

from exemplar_ocr.config.specs import PipelineConfig
from exemplar_ocr.domain.evaluation import EvalRecord, EvalReport, cer
from exemplar_ocr.engine.pipeline import ImageJob, infer
from exemplar_ocr.export.coco import write_json
from exemplar_ocr.utils.errors import ExportError, ManifestError


@dataclass(frozen=True)
class ManifestItem:
    image_id: str
    image_path: str
    gold_text: str
    coco_path: Optional[str] = None


def load_manifest(path: Union[str, Path]) -> List[ManifestItem]:
    """UTF-8 JSON list of {image_id, image_path, gold_text, coco_path?}; paths relative to the manifest."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ManifestError(f"manifest not found: {path}", path=str(path))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ManifestError(f"manifest is not valid UTF-8 JSON: {path} ({exc})", path=str(path))
    if not isinstance(data, list) or not data:
        raise ManifestError("manifest must be a nonempty JSON list", path=str(path))

    base = path.resolve().parent
    items: List[ManifestItem] = []
    seen = set()
    for position, entry in enumerate(data):
        if not isinstance(entry, dict):
            raise ManifestError(f"manifest entry {position} is not an object", entry=position)
        for key in ("image_id", "image_path", "gold_text"):
            if key not in entry:
                raise ManifestError(
                    f"manifest entry {position} is missing {key!r}", entry=position, field=key
                )
        image_id = str(entry["image_id"])
        if image_id in seen:
            raise ManifestError(f"duplicate image_id {image_id!r}", image_id=image_id)
        seen.add(image_id)
        if not isinstance(entry["gold_text"], str):
            raise ManifestError(f"gold_text of {image_id!r} must be a string", image_id=image_id)

        image_path = base / entry["image_path"]
        if not image_path.is_file():
            raise ManifestError(f"image not found for {image_id!r}: {image_path}", image_id=image_id)
        coco_path = None
        if entry.get("coco_path"):
            coco_path = base / entry["coco_path"]
            if not coco_path.is_file():
                raise ManifestError(f"coco file not found for {image_id!r}: {coco_path}", image_id=image_id)
        items.append(
            ManifestItem(image_id, str(image_path), entry["gold_text"], str(coco_path) if coco_path else None)
        )
    return items


def write_records_tsv(report: EvalReport, path: Union[str, Path]) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write("image_id\tchar_edits\tgold_chars\tcer\tprediction\tgold\n")
            for r in report.records:
                rate = "" if r.cer is None else f"{r.cer:.6f}"
                prediction, gold = _cell(r.prediction), _cell(r.gold)
                handle.write(f"{r.image_id}\t{r.char_edits}\t{r.gold_chars}\t{rate}\t{prediction}\t{gold}\n")
    except OSError as exc:
        raise ExportError(f"could not write {path} ({exc})", path=str(path))


def _cell(text: str) -> str:
    return text.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")


def eval_run(
    manifest: Union[str, Path, Sequence[ManifestItem]],
    cfg: PipelineConfig,
    out_dir: Optional[Union[str, Path]] = None,
    *,
    ignore_whitespace: bool = False,
) -> EvalReport:
    """Infer every manifest image and score it against its gold text.

    Failed images are excluded from the sums and listed in the report.
    """
    items = load_manifest(manifest) if isinstance(manifest, (str, Path)) else list(manifest)
    if not items:
        raise ManifestError("manifest has no items")
    results = infer([ImageJob(i.image_id, i.image_path, i.coco_path) for i in items], cfg)

    gold = {item.image_id: item.gold_text for item in items}
    records = [
        EvalRecord(r.image_id, r.transcription.full_text, gold[r.image_id]) for r in results if r.ok
    ]
    failed = [(r.image_id, r.reason or "") for r in results if not r.ok]
    if not records:
        raise ManifestError("every image failed", failed=[image_id for image_id, _ in failed])
    report = cer(records, ignore_whitespace, failed=failed)

    if out_dir is not None:
        out_dir = Path(out_dir)
        write_json(report.as_dict(), out_dir / "report.json")
        write_records_tsv(report, out_dir / "records.tsv")
    return report
