"""Throughput report: wall time and mean per-stage timings for several worker counts."""

from __future__ import annotations

import os
import time
from dataclasses import dataclass
from typing import Dict, List, Sequence

from exemplar_ocr.config.specs import PipelineConfig
from exemplar_ocr.engine.pipeline import STAGES, ImageJob, OcrEngine
from exemplar_ocr.utils.logger import logger


@dataclass(frozen=True)
class BenchmarkRun:
    workers: int
    images: int
    failed: int
    wall_ms: float
    stage_ms: Dict[str, float]
    peak_in_flight: int

    @property
    def pages_per_second(self) -> float:
        return self.images / (self.wall_ms / 1000.0) if self.wall_ms > 0 else 0.0

    def as_dict(self) -> Dict[str, object]:
        return {
            "workers": self.workers,
            "images": self.images,
            "failed": self.failed,
            "wall_ms": round(self.wall_ms, 3),
            "pages_per_second": round(self.pages_per_second, 3),
            "stage_ms": {stage: round(ms, 3) for stage, ms in self.stage_ms.items()},
            "peak_in_flight": self.peak_in_flight,
        }


def run_benchmark(
    jobs: Sequence[ImageJob],
    cfg: PipelineConfig,
    worker_counts: Sequence[int] = (1, 4),
) -> List[BenchmarkRun]:
    """Report-only: one engine shared by every run so model loading is excluded from wall time."""
    engine = OcrEngine(cfg)
    runs: List[BenchmarkRun] = []
    for workers in worker_counts:
        started = time.perf_counter()
        results = engine.infer(jobs, workers=workers)
        wall_ms = (time.perf_counter() - started) * 1000.0
        count = max(len(results), 1)
        stage_ms = {stage: sum(r.timings_ms.get(stage, 0.0) for r in results) / count for stage in STAGES}
        runs.append(
            BenchmarkRun(
                workers=workers,
                images=len(results),
                failed=sum(1 for r in results if not r.ok),
                wall_ms=wall_ms,
                stage_ms=stage_ms,
                peak_in_flight=engine.peak_in_flight,
            )
        )
        logger("benchmark").info("workers=%d wall=%.1f ms", workers, wall_ms)
    return runs


def benchmark_summary(runs: Sequence[BenchmarkRun]) -> Dict[str, object]:
    return {"cpu_count": os.cpu_count(), "runs": [run.as_dict() for run in runs]}
