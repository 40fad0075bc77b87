import json
import tempfile
import unittest
from pathlib import Path

import numpy as np

from exemplar_ocr.config.specs import build_pipeline_config
from exemplar_ocr.domain.evaluation import EvalRecord, cer, levenshtein, word_distance
from exemplar_ocr.engine.evaluate import eval_run, load_manifest
from exemplar_ocr.engine.pipeline import ImageJob, OcrEngine
from exemplar_ocr.export.results import ExportSelection, export_results
from exemplar_ocr.tests.bootstrap import (
    CHAR_CANVAS,
    CJK_CHARS,
    build_block_font,
    build_latin_corpus,
    pipeline_dict,
    random_columns,
    render_vertical_page,
    write_index,
    write_manifest,
)
from exemplar_ocr.utils.errors import AllGoldEmpty, ManifestError, ValidationError


def reference_distance(a, b):
    row = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        previous, row[0] = row[0], i
        for j, cb in enumerate(b, start=1):
            previous, row[j] = row[j], min(row[j] + 1, row[j - 1] + 1, previous + (ca != cb))
    return row[-1]


def random_string(rng, alphabet, max_len=50):
    size = int(rng.integers(0, max_len + 1))
    return "".join(alphabet[int(i)] for i in rng.integers(0, len(alphabet), size=size))


class TestLevenshtein(unittest.TestCase):
    def test_examples(self):
        self.assertEqual(levenshtein("kitten", "sitting"), 3)
        self.assertEqual(levenshtein("", "abc"), 3)
        self.assertEqual(levenshtein("abc", "abc"), 0)
        self.assertEqual(levenshtein("日本", "日木"), 1)

    def test_matches_dynamic_programming(self):
        rng = np.random.default_rng(31)
        alphabet = list("abcdeé日本語ΩЖ😀 ") + [chr(0x1F600 + i) for i in range(5)]
        for _ in range(1000):
            a, b = random_string(rng, alphabet), random_string(rng, alphabet)
            self.assertEqual(levenshtein(a, b), reference_distance(a, b))

    def test_metric_axioms(self):
        rng = np.random.default_rng(32)
        alphabet = list("abc日本")
        for _ in range(200):
            a, b, c = (random_string(rng, alphabet, 12) for _ in range(3))
            self.assertEqual(levenshtein(a, a), 0)
            self.assertEqual(levenshtein(a, b), levenshtein(b, a))
            self.assertLessEqual(levenshtein(a, c), levenshtein(a, b) + levenshtein(b, c))
            if a != b:
                self.assertGreater(levenshtein(a, b), 0)

    def test_word_distance(self):
        self.assertEqual(word_distance("the cat sat", "the bat sat"), (1, 3))
        self.assertEqual(word_distance("", "a b"), (2, 2))


class TestCer(unittest.TestCase):
    def test_examples(self):
        self.assertAlmostEqual(cer([EvalRecord("1", "helo", "hello")]).cer, 0.2)
        self.assertEqual(cer([EvalRecord("1", "", "ab")]).cer, 1.0)
        self.assertEqual(cer([EvalRecord("1", "same", "same")]).cer, 0.0)

    def test_micro_average(self):
        report = cer([EvalRecord("1", "ab", "abcd"), EvalRecord("2", "x", "y")])
        self.assertEqual((report.char_edits, report.gold_chars), (3, 5))
        self.assertAlmostEqual(report.cer, 0.6)

    def test_concatenation_bound(self):
        # Joining pages never raises the edit count.
        rng = np.random.default_rng(4)
        for _ in range(100):
            pairs = [(random_string(rng, "abc", 8), random_string(rng, "abc", 8) + "x") for _ in range(3)]
            records = [EvalRecord(str(i), p, g) for i, (p, g) in enumerate(pairs)]
            joined = levenshtein("".join(p for p, _ in pairs), "".join(g for _, g in pairs))
            self.assertLessEqual(joined, cer(records).char_edits)

    def test_empty_gold_excluded(self):
        report = cer([EvalRecord("1", "junk", ""), EvalRecord("2", "ab", "ab")])
        self.assertEqual(report.cer, 0.0)
        self.assertEqual(report.empty_gold_count, 1)
        self.assertEqual(report.count, 2)
        self.assertIsNone(report.records[0].cer)

    def test_all_gold_empty(self):
        with self.assertRaises(AllGoldEmpty):
            cer([EvalRecord("1", "x", ""), EvalRecord("2", "", "")])

    def test_no_records(self):
        with self.assertRaises(ValidationError):
            cer([])

    def test_unicode_normalization(self):
        decomposed = "cafe\u0301"
        self.assertEqual(cer([EvalRecord("1", decomposed, "café")]).cer, 0.0)

    def test_whitespace(self):
        record = EvalRecord("1", "ab c", "abc")
        self.assertAlmostEqual(cer([record]).cer, 1 / 3)
        self.assertEqual(cer([record], ignore_whitespace=True).cer, 0.0)

    def test_wer(self):
        report = cer([EvalRecord("1", "the bat sat", "the cat sat"), EvalRecord("2", "on", "on a mat")])
        self.assertEqual((report.word_edits, report.gold_words), (3, 6))
        self.assertAlmostEqual(report.wer, 0.5)


class TestManifest(unittest.TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.root = Path(self._tmp.name)
        (self.root / "a.png").write_bytes(b"")
        self.path = self.root / "manifest.json"

    def tearDown(self):
        self._tmp.cleanup()

    def write(self, data):
        self.path.write_text(json.dumps(data), encoding="utf-8")
        return self.path

    def test_relative_paths(self):
        (item,) = load_manifest(self.write([{"image_id": "a", "image_path": "a.png", "gold_text": "x"}]))
        self.assertEqual(Path(item.image_path), self.root.resolve() / "a.png")
        self.assertIsNone(item.coco_path)

    def test_errors(self):
        entry = {"image_id": "a", "image_path": "a.png", "gold_text": "x"}
        cases = [
            [],
            {"image_id": "a"},
            [{"image_id": "a", "image_path": "a.png"}],
            [entry, entry],
            [{**entry, "image_path": "missing.png"}],
            [{**entry, "coco_path": "missing.json"}],
            [{**entry, "gold_text": 3}],
        ]
        for data in cases:
            with self.subTest(data=data), self.assertRaises(ManifestError):
                load_manifest(self.write(data))

    def test_missing_or_invalid_file(self):
        with self.assertRaises(ManifestError):
            load_manifest(self.root / "absent.json")
        self.path.write_text("{not json", encoding="utf-8")
        with self.assertRaises(ManifestError):
            load_manifest(self.path)


class TestEvalRun(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls._tmp = tempfile.TemporaryDirectory()
        cls.root = Path(cls._tmp.name)
        corpus = build_latin_corpus(cls.root / "latin", 50, seed=2024)
        cls.latin_chars, cls.latin_words = corpus.char_index, corpus.word_index
        cjk = build_block_font(cls.root / "fonts" / "blockj.ttf", CJK_CHARS)
        cls.cjk_chars = write_index(cjk, list(CJK_CHARS), CHAR_CANVAS, cls.root / "cjk_chars.efxi")

        rng = np.random.default_rng(2025)
        vertical = [
            render_vertical_page(cjk, random_columns(rng, CJK_CHARS), cls.root / "vertical", f"v{i:03d}")
            for i in range(50)
        ]
        cls.horizontal_pages, cls.vertical_pages = corpus.pages, vertical
        cls.horizontal_manifest = write_manifest(corpus.pages, cls.root / "horizontal.json")
        cls.vertical_manifest = write_manifest(vertical, cls.root / "vertical.json")

    @classmethod
    def tearDownClass(cls):
        cls._tmp.cleanup()

    def test_horizontal_pages_read_exactly(self):
        cfg = build_pipeline_config(pipeline_dict(self.latin_chars, self.latin_words))
        out = self.root / "eval_h"
        report = eval_run(self.horizontal_manifest, cfg, out)
        self.assertEqual(report.cer, 0.0)
        self.assertEqual(report.wer, 0.0)
        self.assertEqual(report.count, 50)
        self.assertEqual(report.failed, ())
        saved = json.loads((out / "report.json").read_text(encoding="utf-8"))
        self.assertEqual(saved["cer"], 0.0)
        rows = (out / "records.tsv").read_text(encoding="utf-8").splitlines()
        self.assertEqual(len(rows), 51)

    def test_vertical_pages_read_exactly(self):
        cfg = build_pipeline_config(pipeline_dict(self.cjk_chars, vertical=True))
        report = eval_run(self.vertical_manifest, cfg)
        self.assertEqual(report.cer, 0.0)
        self.assertEqual(report.count, 50)

    def test_failed_image_is_listed(self):
        items = load_manifest(self.horizontal_manifest)[:3]
        broken = self.root / "broken.png"
        broken.write_bytes(b"not a png")
        items[1] = type(items[1])(items[1].image_id, str(broken), items[1].gold_text, items[1].coco_path)
        cfg = build_pipeline_config(pipeline_dict(self.latin_chars, self.latin_words))
        report = eval_run(items, cfg)
        self.assertEqual(report.count, 2)
        self.assertEqual([image_id for image_id, _ in report.failed], [items[1].image_id])
        self.assertEqual(report.cer, 0.0)

    def test_every_image_failing(self):
        broken = self.root / "broken_all.png"
        broken.write_bytes(b"")
        (item,) = load_manifest(self.horizontal_manifest)[:1]
        cfg = build_pipeline_config(pipeline_dict(self.latin_chars, self.latin_words))
        with self.assertRaises(ManifestError):
            eval_run([type(item)(item.image_id, str(broken), item.gold_text, item.coco_path)], cfg)

    def test_worker_count_does_not_change_exports(self):
        runs = [
            ("horizontal", self.horizontal_pages, pipeline_dict(self.latin_chars, self.latin_words)),
            ("vertical", self.vertical_pages, pipeline_dict(self.cjk_chars, vertical=True)),
        ]
        for layout, pages, data in runs:
            jobs = [ImageJob(p.image_id, str(p.image_path), str(p.coco_path)) for p in pages]
            engine = OcrEngine(build_pipeline_config(data))
            exported = []
            for workers in (1, 4):
                results = engine.infer(jobs, workers=workers)
                self.assertEqual([r.image_id for r in results], [j.image_id for j in jobs])
                out = self.root / f"determinism_{layout}_{workers}"
                written = export_results(results, ExportSelection(), out)
                exported.append({path.relative_to(out): path.read_bytes() for path in written})
            with self.subTest(layout=layout):
                self.assertEqual(len(exported[0]), 3 + len(pages))
                self.assertEqual(exported[0], exported[1])
