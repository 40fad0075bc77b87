import shutil
import tempfile
import unittest
from pathlib import Path

import numpy as np

from exemplar_ocr.config.specs import EncoderSpec
from exemplar_ocr.domain.encoder import Embedding, build_encoder
from exemplar_ocr.domain.exemplar_index import (
    INDEX_MAGIC,
    ExemplarIndex,
    build_index,
    duplicate_label_groups,
    index_from_bytes,
    index_to_bytes,
    load_index,
    query,
    query_labels,
    save_index,
)
from exemplar_ocr.domain.rendering import render_exemplar
from exemplar_ocr.tests.bootstrap import CHAR_CANVAS, LATIN_CHARS, build_block_font
from exemplar_ocr.utils.errors import (
    CorruptIndex,
    DimensionMismatch,
    EmptyIndex,
    FingerprintMismatch,
    ValidationError,
    VersionMismatch,
)


def random_index(rng, n, dim, fingerprint="fp"):
    vectors = rng.standard_normal((n, dim))
    vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
    labels = tuple(f"l{i:04d}" for i in range(n))
    return ExemplarIndex(dim, fingerprint, labels, tuple("font" for _ in labels), vectors.astype(np.float32))


def unit(rng, dim):
    vector = rng.standard_normal(dim)
    return Embedding.normalize(vector)


class TestBuildIndex(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls._tmp = tempfile.TemporaryDirectory()
        root = Path(cls._tmp.name)
        cls.font = build_block_font(root / "blocka.ttf", LATIN_CHARS)
        # Second font lacks "Y" and "Z" and draws the rest with other patterns.
        cls.partial_font = build_block_font(
            root / "blockb.ttf", LATIN_CHARS.replace("Y", "").replace("Z", ""), code_offset=100
        )
        cls.spec = EncoderSpec()
        cls.index = build_index(cls.spec, list(LATIN_CHARS), [cls.font], CHAR_CANVAS)

    @classmethod
    def tearDownClass(cls):
        cls._tmp.cleanup()

    def test_one_entry_per_label(self):
        self.assertEqual(len(self.index), 62)
        self.assertEqual(self.index.labels, tuple(LATIN_CHARS))
        self.assertEqual(set(self.index.font_ids), {"blocka"})

    def test_missing_glyphs_are_skipped(self):
        index = build_index(self.spec, list(LATIN_CHARS), [self.font, self.partial_font], CHAR_CANVAS)
        self.assertEqual(len(index), 122)

    def test_no_renderable_pair(self):
        with self.assertRaises(EmptyIndex):
            build_index(self.spec, list("AB"), [], CHAR_CANVAS)

    def test_exact_render_closure(self):
        self.assertEqual(duplicate_label_groups(self.index), [])
        encoder = build_encoder(self.spec)
        for label in LATIN_CHARS:
            top = query(self.index, encoder.embed(render_exemplar(self.font, label, CHAR_CANVAS)), 1)[0]
            self.assertEqual(top.label, label)
            self.assertAlmostEqual(top.similarity, 1.0, places=5)

    def test_build_is_deterministic(self):
        again = build_index(self.spec, list(LATIN_CHARS), [self.font], CHAR_CANVAS)
        self.assertEqual(index_to_bytes(again), index_to_bytes(self.index))

    def test_render_dir_export(self):
        with tempfile.TemporaryDirectory() as tmp:
            build_index(self.spec, ["A", "b"], [self.font], CHAR_CANVAS, render_dir=tmp)
            names = sorted(p.name for p in (Path(tmp) / "blocka").iterdir())
            self.assertEqual(names, ["U+0041.png", "U+0062.png"])

    def test_same_stem_fonts_keep_separate_ids(self):
        with tempfile.TemporaryDirectory() as tmp:
            copies = []
            for folder in ("serif", "sans"):
                target = Path(tmp) / folder / "Regular.ttf"
                target.parent.mkdir()
                shutil.copyfile(self.font, target)
                copies.append(target)
            index = build_index(self.spec, ["A"], copies, CHAR_CANVAS)
        self.assertEqual(index.font_ids, ("serif-Regular", "sans-Regular"))

    def test_query_labels_deduplicates_fonts(self):
        index = build_index(self.spec, list("ABC"), [self.font, self.partial_font], CHAR_CANVAS)
        q = build_encoder(self.spec).embed(render_exemplar(self.font, "B", CHAR_CANVAS))
        matches = query_labels(index, q, 3)
        self.assertEqual(len({m.label for m in matches}), 3)
        self.assertEqual(matches[0].label, "B")
        self.assertEqual(matches[0].font_id, "blocka")


class TestQuery(unittest.TestCase):
    def test_orthogonal_entries(self):
        vectors = np.eye(3, dtype=np.float32)
        index = ExemplarIndex(3, "fp", ("a", "b", "c"), ("f", "f", "f"), vectors)
        matches = query(index, Embedding(vectors[1]), 3)
        self.assertEqual([m.similarity for m in matches], [1.0, 0.0, 0.0])
        self.assertEqual(matches[0].label, "b")

    def test_ties_break_by_label_then_font(self):
        vectors = np.tile(np.array([[1.0, 0.0]], dtype=np.float32), (3, 1))
        index = ExemplarIndex(2, "fp", ("b", "a", "a"), ("f1", "f2", "f1"), vectors)
        matches = query(index, Embedding(np.array([1.0, 0.0])), 3)
        self.assertEqual([(m.label, m.font_id) for m in matches], [("a", "f1"), ("a", "f2"), ("b", "f1")])

    def test_single_entry(self):
        rng = np.random.default_rng(5)
        index = random_index(rng, 1, 8)
        q = unit(rng, 8)
        match = query(index, q, 1)[0]
        self.assertAlmostEqual(match.similarity, float(index.vectors[0] @ q.vector), places=6)

    def test_matches_brute_force_scan(self):
        rng = np.random.default_rng(20240501)
        index = random_index(rng, 1000, 32)
        vectors = index.vectors.astype(np.float64)
        for _ in range(500):
            q = unit(rng, 32)
            sims = vectors @ q.vector.astype(np.float64)
            scan = sorted(range(1000), key=lambda i: (-sims[i], index.labels[i]))
            for k in (1, 5, 25):
                self.assertEqual([m.label for m in query(index, q, k)], [index.labels[i] for i in scan[:k]])

    def test_errors(self):
        rng = np.random.default_rng(9)
        index = random_index(rng, 4, 8)
        with self.assertRaises(DimensionMismatch):
            query(index, unit(rng, 6), 1)
        with self.assertRaises(FingerprintMismatch):
            query(index, unit(rng, 8), 1, fingerprint="other")
        with self.assertRaises(ValidationError):
            query(index, unit(rng, 8), 0)
        with self.assertRaises(ValidationError):
            query(index, unit(rng, 8), 5)


class TestSerialization(unittest.TestCase):
    def setUp(self):
        self.index = random_index(np.random.default_rng(1), 122, 16)
        self._tmp = tempfile.TemporaryDirectory()
        self.path = Path(self._tmp.name) / "chars.efxi"

    def tearDown(self):
        self._tmp.cleanup()

    def test_round_trip(self):
        save_index(self.index, self.path)
        loaded = load_index(self.path)
        self.assertEqual(loaded.labels, self.index.labels)
        self.assertEqual(loaded.font_ids, self.index.font_ids)
        self.assertEqual(loaded.encoder_fingerprint, self.index.encoder_fingerprint)
        self.assertEqual(loaded.vectors.tobytes(), self.index.vectors.tobytes())
        self.assertEqual(self.path.read_bytes()[:4], INDEX_MAGIC)

    def test_truncated(self):
        data = index_to_bytes(self.index)
        for cut in (2, 10, len(data) // 2, len(data) - 1):
            with self.assertRaises(CorruptIndex):
                index_from_bytes(data[:cut])

    def test_wrong_magic(self):
        data = index_to_bytes(self.index)
        with self.assertRaises(CorruptIndex):
            index_from_bytes(b"XXXX" + data[4:])

    def test_flipped_byte_fails_checksum(self):
        data = bytearray(index_to_bytes(self.index))
        data[len(data) // 2] ^= 0xFF
        with self.assertRaises(CorruptIndex):
            index_from_bytes(bytes(data))

    def test_unknown_version(self):
        data = bytearray(index_to_bytes(self.index))
        data[4] = 9
        with self.assertRaises(VersionMismatch):
            index_from_bytes(bytes(data))

    def test_missing_file(self):
        with self.assertRaises(CorruptIndex):
            load_index(self.path)
