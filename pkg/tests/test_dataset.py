#!/usr/bin/env python
"""Tests for dataset loading, label encoding, splitting and the synthetic fixture."""
import os
import tempfile
import unittest

import numpy as np
from PIL import Image

from cloudseg.core.dataset import (
    Label, LabelMask, SkyImage, decode_target, encode_target, labels_from_codes, load_dataset,
    read_image, read_manifest, random_split, resize_image, train_count, write_dataset,
)
from cloudseg.core.errors import ConfigError, DatasetError, ShapeError, exit_code_for
from cloudseg.core.synth import synth_fixture


class EncodingTests(unittest.TestCase):

    def test_encode_constant_masks(self):
        self.assertTrue(np.all(encode_target(LabelMask.filled(Label.SKY, (8, 8))) == 0.0))
        self.assertTrue(np.all(encode_target(LabelMask.filled(Label.THICK, (8, 8))) == 1.0))

    def test_encode_checkerboard(self):
        board = (np.indices((4, 4)).sum(axis=0) % 2).astype(np.uint8)
        target = encode_target(LabelMask(board))
        np.testing.assert_array_equal(target, board * 0.5)

    def test_decode_inverts_encode(self):
        labels = np.random.default_rng(0).integers(0, 3, (6, 6)).astype(np.uint8)
        np.testing.assert_array_equal(decode_target(encode_target(LabelMask(labels))).labels, labels)

    def test_code_77_rejected(self):
        gray = np.zeros((8, 8), dtype=np.uint8)
        gray[3, 4] = 77
        with self.assertRaises(DatasetError) as cm:
            labels_from_codes(gray, path="mask.png")
        self.assertEqual(cm.exception.value, 77)
        self.assertIn("77", str(cm.exception))
        self.assertIn("mask.png", str(cm.exception))

    def test_remapped_codes(self):
        gray = np.array([[10, 20], [30, 10]], dtype=np.uint8)
        mask = labels_from_codes(gray, {"sky": 10, "thin": 20, "thick": 30})
        np.testing.assert_array_equal(mask.labels, [[0, 1], [2, 0]])

    def test_mask_type_invariants(self):
        with self.assertRaises(ShapeError):
            LabelMask(np.full((2, 2), 3, dtype=np.uint8))
        with self.assertRaises(ShapeError):
            SkyImage(np.zeros((8, 8, 4), dtype=np.uint8))
        with self.assertRaises(ShapeError):
            SkyImage(np.zeros((4, 8, 3), dtype=np.uint8))


class ResizeTests(unittest.TestCase):

    def test_identity_resize(self):
        rgb = np.random.default_rng(1).integers(0, 256, (32, 32, 3)).astype(np.uint8)
        out = resize_image(rgb, 32)
        self.assertEqual(out.shape, (3, 32, 32))
        self.assertLessEqual(np.abs(out - rgb.transpose(2, 0, 1) / 255.0).max(), 1 / 255)

    def test_bilinear_preserves_bounds(self):
        rgb = np.random.default_rng(2).integers(40, 200, (50, 37, 3)).astype(np.uint8)
        out = resize_image(rgb, 16)
        self.assertGreaterEqual(out.min(), 40 / 255 - 1e-6)
        self.assertLessEqual(out.max(), 200 / 255 + 1e-6)


class SplitTests(unittest.TestCase):

    def test_thirty_two_ids(self):
        ids = [f"img{i}" for i in range(32)]
        split = random_split(ids, 0.8, seed=5)
        self.assertEqual(len(split.train_ids), 26)
        self.assertEqual(len(split.test_ids), 6)

    def test_partition_and_determinism(self):
        ids = [str(i) for i in range(17)]
        a = random_split(ids, seed=3)
        self.assertEqual(a, random_split(ids, seed=3))
        self.assertEqual(set(a.train_ids) | set(a.test_ids), set(ids))
        self.assertFalse(set(a.train_ids) & set(a.test_ids))
        self.assertNotEqual(a, random_split(ids, seed=4))

    def test_train_count_clamped(self):
        self.assertEqual(train_count(2), 1)
        self.assertEqual(train_count(3), 2)
        self.assertEqual(train_count(10), 8)

    def test_too_few_ids(self):
        with self.assertRaises(DatasetError):
            random_split(["only"], seed=0)


class SynthFixtureTests(unittest.TestCase):

    def test_four_samples_with_all_labels(self):
        samples = synth_fixture(4, seed=0, size=32)
        self.assertEqual(len(samples), 4)
        for s in samples:
            self.assertEqual(set(np.unique(s.gt.labels)), {0, 1, 2})
            self.assertEqual(s.image.shape, (3, 32, 32))
            np.testing.assert_array_equal(encode_target(s.gt), s.target)

    def test_deterministic(self):
        a = synth_fixture(2, seed=9, size=32)
        b = synth_fixture(2, seed=9, size=32)
        for x, y in zip(a, b):
            self.assertEqual(x.image.tobytes(), y.image.tobytes())
            self.assertEqual(x.gt.labels.tobytes(), y.gt.labels.tobytes())

    def test_count_must_be_positive(self):
        with self.assertRaises(ConfigError) as cm:
            synth_fixture(0)
        self.assertEqual(exit_code_for(cm.exception), 2)


class ManifestTests(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = self.tmp.name

    def tearDown(self):
        self.tmp.cleanup()

    def test_write_then_load(self):
        samples = synth_fixture(3, seed=1, size=32)
        manifest = write_dataset(samples, self.dir)
        loaded = load_dataset(manifest, size=32)
        self.assertEqual([s.id for s in loaded], [s.id for s in samples])
        for a, b in zip(samples, loaded):
            np.testing.assert_array_equal(a.gt.labels, b.gt.labels)
            self.assertLessEqual(np.abs(a.image - b.image).max(), 1 / 255)

    def test_parallel_load_keeps_order(self):
        manifest = write_dataset(synth_fixture(5, seed=2, size=32), self.dir)
        serial = load_dataset(manifest, size=32)
        parallel = load_dataset(manifest, size=32, workers=3)
        self.assertEqual([s.id for s in serial], [s.id for s in parallel])
        for a, b in zip(serial, parallel):
            self.assertEqual(a.image.tobytes(), b.image.tobytes())

    def test_missing_manifest(self):
        with self.assertRaises(DatasetError):
            load_dataset(os.path.join(self.dir, "nope.tsv"))

    def test_bad_mask_value_names_path(self):
        Image.fromarray(np.zeros((16, 16, 3), dtype=np.uint8)).save(os.path.join(self.dir, "a.png"))
        mask = np.zeros((16, 16), dtype=np.uint8)
        mask[0, 0] = 77
        Image.fromarray(mask).save(os.path.join(self.dir, "m.png"))
        manifest = os.path.join(self.dir, "manifest.tsv")
        with open(manifest, "w", encoding="utf-8") as f:
            f.write("# comment\na.png\tm.png\tone\n")
        with self.assertRaises(DatasetError) as cm:
            load_dataset(manifest, size=16)
        self.assertEqual(cm.exception.value, 77)
        self.assertIn("m.png", str(cm.exception))

    def test_duplicate_ids(self):
        manifest = os.path.join(self.dir, "manifest.tsv")
        with open(manifest, "w", encoding="utf-8") as f:
            f.write("a.png\tm.png\tx\nb.png\tn.png\tx\n")
        with self.assertRaises(DatasetError):
            read_manifest(manifest)

    def test_rgba_alpha_dropped(self):
        rgba = np.zeros((10, 10, 4), dtype=np.uint8)
        rgba[..., 0] = 200
        rgba[..., 3] = 10
        path = os.path.join(self.dir, "rgba.png")
        Image.fromarray(rgba).save(path)
        with self.assertLogs("cloudseg.core.dataset", level="WARNING"):
            image = read_image(path)
        self.assertEqual(image.rgb.shape, (10, 10, 3))
        self.assertTrue(np.all(image.rgb[..., 0] == 200))

    def test_undecodable_image(self):
        path = os.path.join(self.dir, "junk.png")
        with open(path, "wb") as f:
            f.write(b"not a png")
        with self.assertRaises(DatasetError):
            read_image(path)


if __name__ == '__main__':
    unittest.main()
