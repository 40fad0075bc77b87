"""Command-line entry point: build-index, infer, eval, visualize, hard-negatives.

Every subcommand prints one JSON summary on stdout. Exit codes: 0 success, 1 some items failed,
2 configuration or usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from exemplar_ocr import __version__
from exemplar_ocr.config.presets import PRESETS, get_preset
from exemplar_ocr.config.specs import PipelineConfig, load_encoder_spec, load_pipeline_config
from exemplar_ocr.domain.encoder import ImageCrop, build_encoder
from exemplar_ocr.domain.exemplar_index import build_index, duplicate_label_groups, load_index, save_index
from exemplar_ocr.domain.geometry import ObjectClass
from exemplar_ocr.domain.recognition import export_hard_negatives, write_hard_negatives
from exemplar_ocr.engine.benchmark import benchmark_summary, run_benchmark
from exemplar_ocr.engine.evaluate import eval_run
from exemplar_ocr.engine.pipeline import ImageJob, OcrEngine
from exemplar_ocr.export.coco import parse_coco
from exemplar_ocr.export.results import ExportSelection, export_results
from exemplar_ocr.export.visualize import visualize
from exemplar_ocr.utils.errors import (
    ConfigError,
    ManifestError,
    OcrError,
    SchemaError,
    ValidationError,
    error_payload,
)
from exemplar_ocr.utils.imaging import load_image
from exemplar_ocr.utils.logger import configure_logging, log_error

EXIT_OK = 0
EXIT_FAILURES = 1
EXIT_CONFIG = 2

FONT_SUFFIXES = (".ttf", ".otf", ".ttc")
USAGE_ERRORS = (ConfigError, ValidationError, ManifestError, SchemaError)


def _emit(payload: Dict[str, Any]) -> None:
    sys.stdout.write(json.dumps(payload, ensure_ascii=False, sort_keys=True) + "\n")
    sys.stdout.flush()


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="pipeline config (UTF-8 JSON)")
    parser.add_argument("--preset", choices=sorted(PRESETS), help="override bundle applied beneath --config")
    parser.add_argument("--vertical", action="store_true", help="right-to-left columns; implies --no-words")
    parser.add_argument("--no-words", action="store_true", help="character recognition only")
    parser.add_argument("--iou-thresh", type=float, help="localizer NMS IoU threshold")
    parser.add_argument("--conf-thresh", type=float, help="localizer confidence threshold")
    parser.add_argument("--workers", type=int, help="images processed concurrently")


def config_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Flag values layered over the config file; flags win."""
    overrides: Dict[str, Any] = {}
    if args.vertical:
        overrides.update({"orientation": "vertical", "no_words": True})
    if args.no_words:
        overrides["no_words"] = True
    localizer: Dict[str, Any] = {}
    if args.iou_thresh is not None:
        localizer["iou_thresh"] = args.iou_thresh
    if args.conf_thresh is not None:
        localizer["conf_thresh"] = args.conf_thresh
    if localizer:
        overrides["localizer"] = localizer
    if args.workers is not None:
        overrides["workers"] = args.workers
    return overrides


def pipeline_config_from_args(args: argparse.Namespace) -> PipelineConfig:
    base = get_preset(args.preset) if args.preset else None
    return load_pipeline_config(args.config, config_overrides(args), base=base)


def _font_paths(args: argparse.Namespace) -> List[Path]:
    fonts = [Path(p) for p in args.font or []]
    if args.font_dir:
        if not args.font_dir.is_dir():
            raise ConfigError(f"font directory not found: {args.font_dir}", path=str(args.font_dir))
        fonts += sorted(p for p in args.font_dir.iterdir() if p.suffix.lower() in FONT_SUFFIXES)
    if not fonts:
        raise ConfigError("no fonts given; use --font or --font-dir")
    return fonts


def _labels(args: argparse.Namespace) -> List[str]:
    labels: List[str] = []
    if args.chars:
        labels += [ch for ch in args.chars if not ch.isspace()]
    if args.labels_file:
        try:
            text = args.labels_file.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"labels file could not be read: {args.labels_file} ({exc})")
        labels += [line.strip() for line in text.splitlines() if line.strip()]
    if not labels:
        raise ConfigError("no labels given; use --chars or --labels-file")
    return list(dict.fromkeys(labels))


def cmd_build_index(args: argparse.Namespace) -> int:
    spec = load_encoder_spec(args.config, args.level)
    index = build_index(spec, _labels(args), _font_paths(args), args.canvas, render_dir=args.render_dir)
    save_index(index, args.out)
    _emit(
        {
            "command": "build-index",
            "out": str(args.out),
            "entries": len(index),
            "dim": index.dim,
            "encoder_fingerprint": index.encoder_fingerprint,
            "collisions": [list(group) for group in duplicate_label_groups(index)],
        }
    )
    return EXIT_OK


def _jobs(images: Sequence[Path], coco: Optional[Path]) -> List[ImageJob]:
    return [ImageJob(path.stem, str(path), str(coco) if coco else None) for path in images]


def cmd_infer(args: argparse.Namespace) -> int:
    cfg = pipeline_config_from_args(args)
    jobs = _jobs(args.images, args.coco)
    if args.benchmark:
        counts = sorted({1, cfg.workers, 4})
        _emit({"command": "infer", "benchmark": benchmark_summary(run_benchmark(jobs, cfg, counts))})
        return EXIT_OK

    results = OcrEngine(cfg).infer(jobs)
    levels = frozenset(ObjectClass(level) for level in args.levels.split(",") if level)
    written: List[Path] = []
    if args.out and results:
        written = export_results(results, ExportSelection(levels, not args.no_text), args.out)
    failed = [{"image_id": r.image_id, "reason": r.reason} for r in results if not r.ok]
    _emit(
        {
            "command": "infer",
            "images": len(results),
            "ok": len(results) - len(failed),
            "failed": failed,
            "written": [str(path) for path in written],
        }
    )
    return EXIT_FAILURES if failed else EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = pipeline_config_from_args(args)
    report = eval_run(args.manifest, cfg, args.out, ignore_whitespace=args.ignore_whitespace)
    _emit(
        {
            "command": "eval",
            "cer": report.cer,
            "wer": report.wer,
            "count": report.count,
            "empty_gold_count": report.empty_gold_count,
            "failed": [{"image_id": image_id, "reason": reason} for image_id, reason in report.failed],
        }
    )
    return EXIT_FAILURES if report.failed else EXIT_OK


def cmd_visualize(args: argparse.Namespace) -> int:
    cfg = pipeline_config_from_args(args)
    result = OcrEngine(cfg).infer(_jobs([args.image], args.coco))[0]
    if not result.ok:
        _emit({"command": "visualize", "image_id": result.image_id, "failed": result.reason})
        return EXIT_FAILURES
    font = args.font or cfg.font_path
    out = visualize(args.image, result.transcription, args.out, font_path=font)
    _emit({"command": "visualize", "image_id": result.image_id, "out": str(out)})
    return EXIT_OK


def _labeled_crops(coco_path: Path, image_dir: Path, level: ObjectClass) -> List[tuple]:
    doc = parse_coco(coco_path)
    labeled = []
    for image in doc.images:
        annotations = [a for a in doc.annotations_for(image.id) if a.category == level and a.text]
        if not annotations:
            continue
        page = ImageCrop(load_image(image_dir / image.file_name))
        labeled.extend((page.crop(a.bbox), a.text) for a in annotations)
    if not labeled:
        raise ValidationError(f"{coco_path} has no labeled {level.value} annotations")
    return labeled


def cmd_hard_negatives(args: argparse.Namespace) -> int:
    encoder = build_encoder(load_encoder_spec(args.config, args.level))
    index = load_index(args.index)
    level = ObjectClass(args.level)
    labeled = _labeled_crops(args.coco, args.image_dir or args.coco.parent, level)
    records = export_hard_negatives(labeled, index, encoder, args.k)
    write_hard_negatives(records, args.hns_out)
    _emit(
        {
            "command": "hard-negatives",
            "out": str(args.hns_out),
            "records": len(records),
            "with_confusions": sum(1 for _, confused in records if confused),
        }
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="exemplar-ocr", description="OCR by exemplar retrieval.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING (default) or ERROR")
    sub = parser.add_subparsers(dest="command", required=True)

    build = sub.add_parser("build-index", help="render labels with fonts and save an exemplar index")
    build.add_argument("--config", type=Path, help="config whose encoder section is used")
    build.add_argument("--level", choices=("char", "word"), default="char")
    build.add_argument("--font", action="append", type=Path)
    build.add_argument("--font-dir", type=Path)
    build.add_argument("--chars", help="every non-space character becomes a label")
    build.add_argument("--labels-file", type=Path, help="one label per line")
    build.add_argument("--canvas", type=int, default=64)
    build.add_argument("--render-dir", type=Path, help="also save each exemplar render as PNG")
    build.add_argument("--out", type=Path, required=True)
    build.set_defaults(handler=cmd_build_index)

    infer = sub.add_parser("infer", help="recognize page images")
    _add_config_flags(infer)
    infer.add_argument("images", nargs="*", type=Path)
    infer.add_argument("--coco", type=Path, help="ground-truth boxes for ground_truth detectors")
    infer.add_argument("--out", type=Path)
    infer.add_argument("--levels", default="line,word,char", help="comma list of COCO levels to export")
    infer.add_argument("--no-text", action="store_true", help="skip assembled text files")
    infer.add_argument("--benchmark", action="store_true", help="report timings for 1 and 4 workers")
    infer.set_defaults(handler=cmd_infer)

    evaluate = sub.add_parser("eval", help="score a manifest of images with gold text")
    _add_config_flags(evaluate)
    evaluate.add_argument("--manifest", type=Path, required=True)
    evaluate.add_argument("--out", type=Path)
    evaluate.add_argument("--ignore-whitespace", action="store_true")
    evaluate.set_defaults(handler=cmd_eval)

    show = sub.add_parser("visualize", help="write a side-by-side PNG of one page")
    _add_config_flags(show)
    show.add_argument("image", type=Path)
    show.add_argument("--coco", type=Path)
    show.add_argument("--font", type=Path)
    show.add_argument("--out", type=Path, required=True)
    show.set_defaults(handler=cmd_visualize)

    hns = sub.add_parser("hard-negatives", help="export retrieval confusions for labeled crops")
    hns.add_argument("--config", type=Path)
    hns.add_argument("--level", choices=("char", "word"), default="char")
    hns.add_argument("--index", type=Path, required=True)
    hns.add_argument("--coco", type=Path, required=True, help="annotations carrying gold text")
    hns.add_argument("--image-dir", type=Path)
    hns.add_argument("--k", type=int, default=5)
    hns.add_argument("--hns-out", type=Path, required=True)
    hns.set_defaults(handler=cmd_hard_negatives)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        if getattr(args, "levels", None):
            for level in args.levels.split(","):
                if level and level not in {cls.value for cls in ObjectClass}:
                    parser.error(f"unknown level {level!r}")
        return args.handler(args)
    except USAGE_ERRORS as exc:
        _emit({"command": args.command, "error": error_payload(exc)})
        return EXIT_CONFIG
    except OcrError as exc:
        log_error("Command failed", str(exc))
        _emit({"command": args.command, "error": error_payload(exc)})
        return EXIT_FAILURES


if __name__ == "__main__":
    sys.exit(main())
