import contextlib
import io
import json
import tempfile
import unittest
from pathlib import Path

from exemplar_ocr.cli import EXIT_CONFIG, EXIT_FAILURES, EXIT_OK, main
from exemplar_ocr.config.specs import EncoderSpec, build_pipeline_config
from exemplar_ocr.domain.exemplar_index import build_index, index_to_bytes, load_index
from exemplar_ocr.engine.evaluate import eval_run
from exemplar_ocr.engine.pipeline import ImageJob, infer
from exemplar_ocr.tests.bootstrap import (
    CHAR_CANVAS,
    LATIN_CHARS,
    build_latin_corpus,
    combine_coco,
    pipeline_dict,
    write_config,
    write_manifest,
)


def run(*argv):
    stdout = io.StringIO()
    with contextlib.redirect_stdout(stdout), contextlib.redirect_stderr(io.StringIO()):
        code = main([str(arg) for arg in argv])
    lines = stdout.getvalue().splitlines()
    return code, json.loads(lines[-1]) if lines else None


class TestCli(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls._tmp = tempfile.TemporaryDirectory()
        cls.root = Path(cls._tmp.name)
        cls.corpus = build_latin_corpus(cls.root, 3, seed=11)
        cls.config = write_config(
            cls.root / "config.json", pipeline_dict(cls.corpus.char_index, cls.corpus.word_index)
        )
        cls.coco = combine_coco(cls.corpus.pages, cls.root / "pages.json")

    @classmethod
    def tearDownClass(cls):
        cls._tmp.cleanup()

    def test_build_index_matches_library(self):
        out = self.root / "cli_chars.efxi"
        flags = ["--font", self.corpus.font, "--chars", LATIN_CHARS, "--canvas", CHAR_CANVAS, "--out", out]
        code, summary = run("build-index", *flags)
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(summary["entries"], 62)
        self.assertEqual(summary["collisions"], [])
        library = build_index(EncoderSpec(), list(LATIN_CHARS), [self.corpus.font], CHAR_CANVAS)
        self.assertEqual(index_to_bytes(load_index(out)), index_to_bytes(library))

    def test_build_index_from_font_dir(self):
        flags = ["--font-dir", self.corpus.font.parent, "--chars", "abc", "--out", self.root / "d.efxi"]
        code, summary = run("build-index", *flags)
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(summary["entries"], 3)

    def test_build_index_without_fonts(self):
        code, summary = run("build-index", "--chars", "abc", "--out", self.root / "none.efxi")
        self.assertEqual(code, EXIT_CONFIG)
        self.assertEqual(summary["error"]["code"], "config_error")

    def test_infer_matches_library(self):
        out = self.root / "infer_out"
        images = [page.image_path for page in self.corpus.pages]
        code, summary = run("infer", "--config", self.config, "--coco", self.coco, "--out", out, *images)
        self.assertEqual(code, EXIT_OK)
        self.assertEqual((summary["images"], summary["ok"]), (3, 3))

        cfg = build_pipeline_config(pipeline_dict(self.corpus.char_index, self.corpus.word_index))
        results = infer([ImageJob(p.stem, str(p), str(self.coco)) for p in images], cfg)
        for page, result in zip(self.corpus.pages, results):
            text = (out / "text" / f"{page.image_path.stem}.txt").read_text(encoding="utf-8")
            self.assertEqual(text, result.transcription.full_text)
            self.assertEqual(text, page.gold_text)
        self.assertTrue((out / "coco_char.json").is_file())

    def test_infer_levels_selection(self):
        out = self.root / "lines_only"
        code, summary = run(
            "infer",
            "--config",
            self.config,
            "--coco",
            self.coco,
            "--out",
            out,
            "--levels",
            "line",
            "--no-text",
            self.corpus.pages[0].image_path,
        )
        self.assertEqual(code, EXIT_OK)
        self.assertEqual([Path(p).name for p in summary["written"]], ["coco_line.json"])

    def test_infer_benchmark(self):
        images = [page.image_path for page in self.corpus.pages]
        code, summary = run("infer", "--config", self.config, "--coco", self.coco, "--benchmark", *images)
        self.assertEqual(code, EXIT_OK)
        self.assertEqual([r["workers"] for r in summary["benchmark"]["runs"]], [1, 4])

    def test_unknown_flag(self):
        with contextlib.redirect_stderr(io.StringIO()), self.assertRaises(SystemExit) as ctx:
            main(["infer", "--bogus"])
        self.assertEqual(ctx.exception.code, 2)

    def test_unknown_level(self):
        with contextlib.redirect_stderr(io.StringIO()), self.assertRaises(SystemExit) as ctx:
            main(["infer", "--config", str(self.config), "--levels", "paragraph"])
        self.assertEqual(ctx.exception.code, 2)

    def test_config_error(self):
        bad = write_config(self.root / "bad.json", {"line_detector": {"kind": "ground_truth"}})
        code, summary = run("infer", "--config", bad, self.corpus.pages[0].image_path)
        self.assertEqual(code, EXIT_CONFIG)
        self.assertEqual(summary["error"]["code"], "config_error")

    def test_missing_index_is_a_config_error(self):
        data = pipeline_dict(self.root / "does_not_exist.efxi")
        config = write_config(self.root / "missing_index.json", data)
        code, summary = run("infer", "--config", config, "--coco", self.coco, self.corpus.pages[0].image_path)
        self.assertEqual(code, EXIT_CONFIG)
        self.assertEqual(summary["error"]["code"], "config_error")
        self.assertEqual(summary["error"]["field"], "recognition.char_index_path")

    def test_damaged_index_is_not_a_config_error(self):
        damaged = self.root / "damaged.efxi"
        damaged.write_bytes(self.corpus.char_index.read_bytes()[:40])
        config = write_config(self.root / "damaged.json", pipeline_dict(damaged))
        code, summary = run("infer", "--config", config, "--coco", self.coco, self.corpus.pages[0].image_path)
        self.assertEqual(code, EXIT_FAILURES)
        self.assertEqual(summary["error"]["code"], "corrupt_index")

    def test_vertical_flag_needs_no_config_change(self):
        page = self.corpus.pages[0].image_path
        code, _ = run("infer", "--config", self.config, "--coco", self.coco, "--vertical", page)
        self.assertEqual(code, EXIT_OK)

    def test_eval_with_failing_image(self):
        broken = self.root / "broken.png"
        broken.write_bytes(b"")
        manifest = self.root / "manifest.json"
        write_manifest(self.corpus.pages, manifest)
        entries = json.loads(manifest.read_text(encoding="utf-8"))
        entries.append({"image_id": "broken", "image_path": "broken.png", "gold_text": "x"})
        manifest.write_text(json.dumps(entries), encoding="utf-8")

        out = self.root / "eval_out"
        code, summary = run("eval", "--config", self.config, "--manifest", manifest, "--out", out)
        self.assertEqual(code, EXIT_FAILURES)
        self.assertEqual(summary["cer"], 0.0)
        self.assertEqual([f["image_id"] for f in summary["failed"]], ["broken"])
        self.assertTrue((out / "report.json").is_file())

        cfg = build_pipeline_config(pipeline_dict(self.corpus.char_index, self.corpus.word_index))
        report = eval_run(manifest, cfg)
        self.assertEqual((report.cer, report.count), (summary["cer"], summary["count"]))

    def test_eval_missing_manifest(self):
        code, summary = run("eval", "--config", self.config, "--manifest", self.root / "absent.json")
        self.assertEqual(code, EXIT_CONFIG)
        self.assertEqual(summary["error"]["code"], "manifest_error")

    def test_visualize(self):
        page = self.corpus.pages[0]
        out = self.root / "vis.png"
        code, summary = run(
            "visualize",
            "--config",
            self.config,
            "--coco",
            page.coco_path,
            "--font",
            self.corpus.font,
            "--out",
            out,
            page.image_path,
        )
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(summary["out"], str(out))
        self.assertTrue(out.is_file())

    def test_hard_negatives(self):
        out = self.root / "hns.txt"
        code, summary = run(
            "hard-negatives",
            "--index",
            self.corpus.char_index,
            "--coco",
            self.coco,
            "--image-dir",
            self.corpus.pages[0].image_path.parent,
            "--k",
            3,
            "--hns-out",
            out,
        )
        self.assertEqual(code, EXIT_OK)
        lines = out.read_text(encoding="utf-8").splitlines()
        self.assertEqual(len(lines), summary["records"])
        for line in lines:
            gold, confused = line.split("\t")
            self.assertEqual(len(gold), 1)
            self.assertNotIn(gold, confused.split(","))
