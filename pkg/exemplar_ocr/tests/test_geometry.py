import random
import unittest

from exemplar_ocr.domain.geometry import BBox, DetectedObject, ObjectClass, clip, iou, nms
from exemplar_ocr.utils.errors import DegenerateBox, ValidationError


def reference_nms(dets, iou_thresh):
    """O(n^2) greedy suppression over the same visiting order."""
    ordered = sorted(dets, key=lambda d: (-d.confidence, *d.bbox.sort_key(), d.cls.value))
    suppressed = [False] * len(ordered)
    kept = []
    for i, det in enumerate(ordered):
        if suppressed[i]:
            continue
        kept.append(det)
        for j in range(i + 1, len(ordered)):
            other = ordered[j]
            if other.cls == det.cls and iou(det.bbox, other.bbox) > iou_thresh:
                suppressed[j] = True
    return kept


def random_dets(rng, n):
    dets = []
    classes = list(ObjectClass)
    for _ in range(n):
        x0 = rng.uniform(0, 90)
        y0 = rng.uniform(0, 90)
        dets.append(
            DetectedObject(
                BBox(x0, y0, x0 + rng.uniform(1, 30), y0 + rng.uniform(1, 30)),
                rng.choice(classes),
                round(rng.uniform(0, 1), 2),
            )
        )
    return dets


class TestBBox(unittest.TestCase):
    def test_rejects_inverted_and_non_finite(self):
        with self.assertRaises(ValidationError):
            BBox(5, 0, 5, 10)
        with self.assertRaises(ValidationError):
            BBox(0, 0, float("nan"), 1)

    def test_xywh_mapping(self):
        self.assertEqual(BBox.from_xywh(10, 10, 50, 20), BBox(10, 10, 60, 30))
        self.assertEqual(BBox(10, 10, 60, 30).to_xywh(), [10, 10, 50, 20])

    def test_to_pixels_floors_and_ceils(self):
        self.assertEqual(BBox(1.2, 2.7, 5.1, 6.0).to_pixels(), (1, 2, 6, 6))


class TestIoU(unittest.TestCase):
    def test_identity(self):
        b = BBox(3, 4, 10, 12)
        self.assertEqual(iou(b, b), 1.0)

    def test_disjoint(self):
        self.assertEqual(iou(BBox(0, 0, 1, 1), BBox(5, 5, 6, 6)), 0.0)

    def test_partial_overlap(self):
        self.assertAlmostEqual(iou(BBox(0, 0, 2, 2), BBox(1, 0, 3, 2)), 1 / 3)

    def test_edge_touching_is_zero(self):
        self.assertEqual(iou(BBox(0, 0, 1, 1), BBox(1, 0, 2, 1)), 0.0)

    def test_symmetric(self):
        rng = random.Random(3)
        for det_a, det_b in zip(random_dets(rng, 50), random_dets(rng, 50)):
            self.assertEqual(iou(det_a.bbox, det_b.bbox), iou(det_b.bbox, det_a.bbox))


class TestNms(unittest.TestCase):
    def test_empty_and_single(self):
        self.assertEqual(nms([], 0.5), [])
        det = DetectedObject(BBox(0, 0, 1, 1), ObjectClass.CHAR, 0.4)
        self.assertEqual(nms([det], 0.5), [det])

    def test_duplicate_keeps_higher_confidence(self):
        high = DetectedObject(BBox(0, 0, 10, 10), ObjectClass.WORD, 0.9)
        low = DetectedObject(BBox(0, 0, 10, 10), ObjectClass.WORD, 0.8)
        self.assertEqual(nms([low, high], 0.5), [high])

    def test_disjoint_both_kept_by_confidence(self):
        a = DetectedObject(BBox(0, 0, 10, 10), ObjectClass.WORD, 0.3)
        b = DetectedObject(BBox(20, 20, 30, 30), ObjectClass.WORD, 0.7)
        self.assertEqual(nms([a, b], 0.5), [b, a])

    def test_classes_do_not_suppress_each_other(self):
        a = DetectedObject(BBox(0, 0, 10, 10), ObjectClass.WORD, 0.9)
        b = DetectedObject(BBox(0, 0, 10, 10), ObjectClass.CHAR, 0.8)
        self.assertEqual(nms([a, b], 0.5), [a, b])

    def test_matches_reference_and_is_idempotent(self):
        rng = random.Random(20240501)
        for _ in range(200):
            dets = random_dets(rng, rng.randint(0, 200))
            thresh = rng.choice([0.0, 0.3, 0.45, 0.7, 1.0])
            kept = nms(dets, thresh)
            self.assertEqual(kept, reference_nms(dets, thresh))
            self.assertEqual(nms(kept, thresh), kept)

    def test_threshold_validated(self):
        with self.assertRaises(ValidationError):
            nms([], 1.5)


class TestClip(unittest.TestCase):
    def test_clip_to_image(self):
        self.assertEqual(clip(BBox(-5, -5, 10, 10), 100, 100), BBox(0, 0, 10, 10))

    def test_inside_unchanged(self):
        box = BBox(10, 20, 30, 40)
        self.assertEqual(clip(box, 100, 100), box)

    def test_outside_is_degenerate(self):
        with self.assertRaises(DegenerateBox):
            clip(BBox(101, 0, 110, 10), 100, 100)
