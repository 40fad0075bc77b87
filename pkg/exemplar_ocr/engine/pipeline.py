"""Batch inference: load -> detect lines -> localize -> recognize -> assemble, per image."""

from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

from exemplar_ocr.config.specs import DetectorKind, DetectorSpec, PipelineConfig
from exemplar_ocr.domain.assembly import PageTranscription, assemble
from exemplar_ocr.domain.detection import (
    AnnotationStore,
    Detector,
    GroundTruthDetector,
    build_detector,
    detect_lines,
    localize,
)
from exemplar_ocr.domain.encoder import ImageCrop, Provenance, build_encoder
from exemplar_ocr.domain.exemplar_index import ExemplarIndex, load_index
from exemplar_ocr.domain.geometry import BBox
from exemplar_ocr.domain.recognition import Encoders, RecognitionConfig, RecognizedToken, recognize_line
from exemplar_ocr.engine.worker_pool import WorkerPool
from exemplar_ocr.export.coco import parse_coco
from exemplar_ocr.utils.errors import ConfigError, MissingAnnotation
from exemplar_ocr.utils.imaging import load_image
from exemplar_ocr.utils.logger import log_error, logger

STAGES = ("load", "detect_lines", "localize", "recognize", "assemble")


class JobStatus(str, Enum):
    OK = "ok"
    FAILED = "failed"


@dataclass(frozen=True)
class ImageJob:
    image_id: str
    path: str
    # Per-image ground-truth boxes for ground_truth detectors.
    coco_path: Optional[str] = None


@dataclass(frozen=True)
class JobResult:
    image_id: str
    path: str
    status: JobStatus
    transcription: Optional[PageTranscription] = None
    reason: Optional[str] = None
    width: int = 0
    height: int = 0
    timings_ms: Dict[str, float] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == JobStatus.OK


class _StageClock:
    def __init__(self):
        self.totals: Dict[str, float] = {stage: 0.0 for stage in STAGES}

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        started = time.perf_counter()
        try:
            yield
        finally:
            self.totals[name] += (time.perf_counter() - started) * 1000.0


def _pixel_region(bbox: BBox, width: int, height: int) -> BBox:
    """The integer rectangle ImageCrop.crop actually cuts for bbox."""
    x0, y0, x1, y1 = bbox.to_pixels()
    return BBox(float(max(x0, 0)), float(max(y0, 0)), float(min(x1, width)), float(min(y1, height)))


def _annotations_for_job(job: ImageJob) -> AnnotationStore:
    doc = parse_coco(job.coco_path)
    image = doc.image_by_file_name(Path(job.path).name)
    if image is None and len(doc.images) == 1:
        image = doc.images[0]
    if image is None:
        raise MissingAnnotation(
            f"{job.coco_path} has no image entry for {Path(job.path).name}", page_id=job.image_id
        )
    store = AnnotationStore()
    store.add_page(job.image_id, [(ann.bbox, ann.category) for ann in doc.annotations_for(image.id)])
    return store


class OcrEngine:
    """Models, encoders and indexes loaded once and shared read-only by every worker."""

    def __init__(self, cfg: PipelineConfig, annotations: Optional[AnnotationStore] = None):
        self.cfg = cfg
        self.char_encoder = build_encoder(cfg.char_encoder)
        self.word_encoder = (
            build_encoder(cfg.effective_word_encoder) if cfg.word_encoder else self.char_encoder
        )
        char_index = self._load_checked(
            cfg.recognition.char_index_path, self.char_encoder.fingerprint, "char"
        )
        word_index = None
        if cfg.uses_word_index:
            word_index = self._load_checked(
                cfg.recognition.word_index_path, self.word_encoder.fingerprint, "word"
            )
        settings = cfg.recognition
        self.recognition = RecognitionConfig(
            char_index=char_index,
            word_index=word_index,
            word_fallback_threshold=settings.word_fallback_threshold,
            insert_spaces=settings.insert_spaces,
            k=settings.k,
            unreadable_threshold=settings.unreadable_threshold,
            unreadable_marker=settings.unreadable_marker,
        )
        self.encoders = Encoders(word=self.word_encoder, char=self.char_encoder)
        self.line_detector = self._shared_detector(cfg.line_detector, annotations)
        self.localizer = self._shared_detector(cfg.localizer, annotations)
        self.peak_in_flight = 0

    @staticmethod
    def _load_checked(path: str, fingerprint: str, level: str) -> ExemplarIndex:
        if not Path(path).is_file():
            raise ConfigError(
                f"recognition.{level}_index_path does not name an index file: {path}",
                field=f"recognition.{level}_index_path",
                path=path,
            )
        index = load_index(path)
        if index.encoder_fingerprint != fingerprint:
            raise ConfigError(
                f"{level} index {path} was built with a different encoder",
                path=path,
                expected=fingerprint,
                actual=index.encoder_fingerprint,
            )
        return index

    @staticmethod
    def _shared_detector(spec: DetectorSpec, annotations: Optional[AnnotationStore]) -> Optional[Detector]:
        if spec.kind == DetectorKind.GROUND_TRUTH and annotations is None and not spec.annotation_path:
            # Boxes arrive with each job.
            return None
        return build_detector(spec, annotations)

    def _detectors_for(self, job: ImageJob) -> Tuple[Detector, Detector]:
        line_detector, localizer = self.line_detector, self.localizer
        if job.coco_path:
            store = _annotations_for_job(job)
            if self.cfg.line_detector.kind == DetectorKind.GROUND_TRUTH:
                line_detector = GroundTruthDetector(self.cfg.line_detector, store)
            if self.cfg.localizer.kind == DetectorKind.GROUND_TRUTH:
                localizer = GroundTruthDetector(self.cfg.localizer, store)
        if line_detector is None or localizer is None:
            raise MissingAnnotation(
                "ground-truth detection needs a coco_path or annotation_path", page_id=job.image_id
            )
        return line_detector, localizer

    def process(self, job: ImageJob) -> JobResult:
        """Run one image; every error becomes a failed result."""
        clock = _StageClock()
        width = height = 0
        try:
            with clock.stage("load"):
                pixels = load_image(job.path)
                height, width = pixels.shape
                page = ImageCrop(pixels, Provenance(page_id=job.image_id, file_name=Path(job.path).name))
            line_detector, localizer = self._detectors_for(job)

            with clock.stage("detect_lines"):
                lines = detect_lines(page, line_detector)

            recognized: List[Tuple[BBox, List[RecognizedToken]]] = []
            for line_index, line in enumerate(lines):
                region = _pixel_region(line.bbox, width, height)
                provenance = Provenance(
                    page_id=job.image_id,
                    file_name=Path(job.path).name,
                    line_index=line_index,
                    bbox=region,
                )
                line_crop = page.crop(region, provenance)
                with clock.stage("localize"):
                    words, chars = localize(line_crop, localizer, self.cfg.no_words)
                with clock.stage("recognize"):
                    tokens = recognize_line(
                        line_crop, words, chars, self.recognition, self.encoders, self.cfg.orientation
                    )
                recognized.append((line.bbox, [token.translate(region.x0, region.y0) for token in tokens]))

            with clock.stage("assemble"):
                transcription = assemble(recognized, self.cfg.orientation, self.recognition.insert_spaces)
        except Exception as exc:
            log_error("Image failed", f"{job.image_id}: {exc}")
            return JobResult(
                image_id=job.image_id,
                path=job.path,
                status=JobStatus.FAILED,
                reason=f"{getattr(exc, 'code', type(exc).__name__)}: {exc}",
                width=width,
                height=height,
                timings_ms=clock.totals,
            )
        return JobResult(
            image_id=job.image_id,
            path=job.path,
            status=JobStatus.OK,
            transcription=transcription,
            width=width,
            height=height,
            timings_ms=clock.totals,
        )

    def infer(self, jobs: Sequence[ImageJob], workers: Optional[int] = None) -> List[JobResult]:
        """One result per job, in input order, for any worker count."""
        workers = workers or self.cfg.workers
        started = time.perf_counter()
        logger("pipeline").info("batch start: %d images, %d workers", len(jobs), workers)
        pool: WorkerPool[ImageJob, JobResult] = WorkerPool(workers, self.cfg.queue_capacity)
        results = pool.map(self.process, list(jobs))
        self.peak_in_flight = pool.peak_in_flight
        logger("pipeline").info(
            "batch finish: %d ok, %d failed, %.1f ms",
            sum(1 for r in results if r.ok),
            sum(1 for r in results if not r.ok),
            (time.perf_counter() - started) * 1000.0,
        )
        return results


def as_jobs(images: Sequence[Union[ImageJob, Tuple[str, str]]]) -> List[ImageJob]:
    return [img if isinstance(img, ImageJob) else ImageJob(str(img[0]), str(img[1])) for img in images]


def infer(
    images: Sequence[Union[ImageJob, Tuple[str, str]]],
    cfg: PipelineConfig,
    *,
    annotations: Optional[AnnotationStore] = None,
) -> List[JobResult]:
    """Recognize (image_id, path) pairs; a failing image never aborts the batch."""
    jobs = as_jobs(images)
    if not jobs:
        return []
    return OcrEngine(cfg, annotations).infer(jobs)
