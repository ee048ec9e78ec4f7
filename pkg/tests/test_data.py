# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

import tempfile
import unittest
from pathlib import Path
import numpy as np
from LabelForge.core.classutils import Label, LabelSource, TrainingSet
from LabelForge.core.rng import stream
from LabelForge.data.corpus import Sample, Dataset, Tripwire, load_corpus, write_manifest, read_raw_image, \
    write_raw_image, REFERENCE_CLASS_COUNTS
from LabelForge.data.synthetic import synthesize_corpus
from LabelForge.data.augment import AffineParams, AugmentPolicy, IDENTITY, apply_affine, augment_batch, resize_batch
from LabelForge.data.curation import split_train_eval, curate_training_set, merge_pseudo, expected_curation_counts, \
    unlabeled_count, train_size
from LabelForge.errors import IngestionError, EmptyCorpusError, InputError, UsageError, StratificationError, \
    ConfigurationError

def _corpus(benign: int, malignant: int) -> Dataset:
    pixels = np.zeros((2, 2, 1), dtype=np.float32)
    labels = [Label.Benign] * benign + [Label.Malignant] * malignant
    return Dataset([Sample.labeled(f"s{i:05d}", pixels, label) for i, label in enumerate(labels)], "toy")

class TestCorpus(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_manifest_roundtrip(self):
        corpus = synthesize_corpus(6, size=(8, 8), seed=1)
        path = write_manifest(corpus, self.dir / "manifest.csv")
        loaded = load_corpus(path)
        self.assertEqual(loaded.ids, corpus.ids)
        np.testing.assert_array_equal(loaded.assigned_labels(), corpus.assigned_labels())
        np.testing.assert_array_equal(loaded.images(), corpus.images())

    def test_unlabeled_manifest_keeps_hidden_label(self):
        corpus = synthesize_corpus(4, size=(8, 8), seed=2)
        stripped = Dataset([s.strip() for s in corpus])
        path = write_manifest(stripped, self.dir / "unlabeled.csv")
        with self.assertRaises(IngestionError):
            load_corpus(path)
        loaded = load_corpus(path, allow_unlabeled=True)
        self.assertTrue(all(s.assigned_label is None for s in loaded))
        self.assertEqual([s.audit_label() for s in loaded], [s.audit_label() for s in corpus])

    def test_relabeled_manifest_keeps_source(self):
        corpus = synthesize_corpus(4, size=(8, 8), seed=3)
        relabeled = Dataset([s.strip().relabel(Label.Malignant, LabelSource.Pseudo) for s in corpus])
        loaded = load_corpus(write_manifest(relabeled, self.dir / "pseudo.csv"))
        self.assertEqual(loaded.count_sources()[LabelSource.Pseudo], 4)
        self.assertEqual(loaded.counts()[Label.Malignant], 4)

    def test_empty_manifest(self):
        path = self.dir / "empty.csv"
        path.write_text("id,path,label\n")
        with self.assertRaises(EmptyCorpusError):
            load_corpus(path)

    def test_missing_payload_names_row(self):
        path = self.dir / "broken.csv"
        path.write_text("id,path,label\na,missing.lfim,B\n")
        with self.assertRaises(IngestionError) as ctx:
            load_corpus(path)
        self.assertIn("missing.lfim", str(ctx.exception))

    def test_unknown_label_token(self):
        write_raw_image(self.dir / "a.lfim", np.zeros((2, 2, 1)))
        path = self.dir / "bad.csv"
        path.write_text("id,path,label\na,a.lfim,X\n")
        with self.assertRaises(IngestionError):
            load_corpus(path)

    def test_raw_image_roundtrip_clamps(self):
        pixels = np.array([[[-1.0], [0.5]], [[2.0], [0.25]]])
        restored = read_raw_image(write_raw_image(self.dir / "p.lfim", pixels))
        np.testing.assert_array_equal(restored[..., 0], [[0.0, 0.5], [1.0, 0.25]])

    def test_truncated_raw_image(self):
        path = write_raw_image(self.dir / "p.lfim", np.zeros((2, 2, 1)))
        path.write_bytes(path.read_bytes()[:-1])
        with self.assertRaises(InputError):
            read_raw_image(path)

    def test_duplicate_ids(self):
        pixels = np.zeros((2, 2, 1))
        with self.assertRaises(UsageError):
            Dataset([Sample.labeled("a", pixels, Label.Benign), Sample.labeled("a", pixels, Label.Malignant)])

    def test_tripwire_counts_hidden_reads(self):
        tripwire = Tripwire()
        sample = _corpus(1, 0)[0].strip(tripwire)
        self.assertIsNone(sample.assigned_label)
        self.assertEqual(sample.audit_label(), Label.Benign)
        self.assertEqual(tripwire.reads, 0)
        self.assertEqual(sample.true_label, Label.Benign)
        self.assertEqual(tripwire.reads, 1)

    def test_relabel_rejects_ground_truth_source(self):
        with self.assertRaises(UsageError):
            _corpus(1, 0)[0].strip().relabel(Label.Benign, LabelSource.GroundTruth)

class TestSynthetic(unittest.TestCase):

    def test_counts_and_range(self):
        corpus = synthesize_corpus({Label.Benign: 3, Label.Malignant: 5}, size=(8, 8), seed=0)
        self.assertEqual(corpus.counts(), {Label.Benign: 3, Label.Malignant: 5})
        images = corpus.images()
        self.assertEqual(images.shape, (8, 3, 8, 8))
        self.assertGreaterEqual(images.min(), 0.0)
        self.assertLessEqual(images.max(), 1.0)

    def test_deterministic(self):
        a = synthesize_corpus(7, size=(8, 8), seed=4)
        b = synthesize_corpus(7, size=(8, 8), seed=4)
        self.assertEqual(a.counts(), {Label.Benign: 4, Label.Malignant: 3})
        np.testing.assert_array_equal(a.images(), b.images())
        np.testing.assert_array_equal(a.assigned_labels(), b.assigned_labels())

    def test_invalid_counts(self):
        with self.assertRaises(ConfigurationError):
            synthesize_corpus({Label.Benign: 0, Label.Malignant: 0})

class TestAugment(unittest.TestCase):

    def test_identity(self):
        pixels = np.random.default_rng(0).random((9, 7, 3))
        np.testing.assert_allclose(apply_affine(pixels, IDENTITY), pixels, atol=1e-6)

    def test_flips(self):
        pixels = np.random.default_rng(1).random((4, 5, 1))
        np.testing.assert_allclose(apply_affine(pixels, IDENTITY._replace(hflip=True)), pixels[:, ::-1], atol=1e-6)
        np.testing.assert_allclose(apply_affine(pixels, IDENTITY._replace(vflip=True)), pixels[::-1], atol=1e-6)

    def test_target_size(self):
        pixels = np.random.default_rng(2).random((32, 32, 3))
        self.assertEqual(apply_affine(pixels, AffineParams(10.0, 0.1, True, False), (16, 12)).shape, (16, 12, 3))

    def test_rotation_direction(self):
        size, r = 33, 10
        center = (size - 1) // 2
        pixels = np.zeros((size, size, 1))
        pixels[center, center + r, 0] = 1.0
        out = apply_affine(pixels, AffineParams(40.0, 0.0, False, False))[..., 0]
        row, col = np.unravel_index(np.argmax(out), out.shape)
        theta = np.deg2rad(40.0)
        self.assertLessEqual(abs(row - (center + r * np.sin(theta))), 1.0)
        self.assertLessEqual(abs(col - (center + r * np.cos(theta))), 1.0)

    def test_zero_area_image(self):
        with self.assertRaises(InputError):
            apply_affine(np.zeros((0, 4, 1)), IDENTITY)

    def test_policy_bounds(self):
        policy = AugmentPolicy()
        rng = stream(0, "policy")
        for _ in range(200):
            params = policy.sample(rng)
            self.assertLessEqual(abs(params.rotation_deg), 40.0)
            self.assertLessEqual(abs(params.shear), 0.2)
        with self.assertRaises(ConfigurationError):
            AugmentPolicy(hflip_prob=1.5)

    def test_batch_streams(self):
        corpus = synthesize_corpus(4, size=(16, 16), seed=0)
        policy = AugmentPolicy(target_size=(8, 8))
        first = augment_batch(corpus, policy, seed=3, epoch=0)
        self.assertEqual(first.shape, (4, 3, 8, 8))
        np.testing.assert_array_equal(first, augment_batch(corpus, policy, seed=3, epoch=0))
        np.testing.assert_array_equal(first[1:], augment_batch(corpus[1:], policy, seed=3, epoch=0))
        self.assertFalse(np.array_equal(first, augment_batch(corpus, policy, seed=3, epoch=1)))

    def test_resize_batch(self):
        corpus = synthesize_corpus(2, size=(16, 16), seed=0)
        np.testing.assert_array_equal(resize_batch(corpus, (16, 16)), corpus.images())
        self.assertEqual(resize_batch(corpus, (8, 8)).shape, (2, 3, 8, 8))

class TestCuration(unittest.TestCase):

    def test_small_split(self):
        train, held_out = split_train_eval(_corpus(5, 5), seed=0)
        self.assertEqual((len(train), len(held_out)), (8, 2))
        self.assertEqual(train.counts(), {Label.Benign: 4, Label.Malignant: 4})
        self.assertEqual(sorted(train.ids + held_out.ids), _corpus(5, 5).ids)

    def test_breast_sized_split(self):
        counts = REFERENCE_CLASS_COUNTS["breast"]
        train, held_out = split_train_eval(_corpus(counts[Label.Benign], counts[Label.Malignant]), seed=42)
        self.assertEqual(len(train), 6327)
        self.assertEqual(len(held_out), 1582)
        self.assertEqual(train.counts(), {Label.Benign: 1984, Label.Malignant: 4343})

    def test_split_is_seeded(self):
        corpus = _corpus(20, 30)
        a, _ = split_train_eval(corpus, seed=1)
        b, _ = split_train_eval(corpus, seed=1)
        c, _ = split_train_eval(corpus, seed=2)
        self.assertEqual(a.ids, b.ids)
        self.assertNotEqual(a.ids, c.ids)

    def test_split_errors(self):
        with self.assertRaises(StratificationError):
            split_train_eval(_corpus(1, 9))
        for benign, malignant in [(10, 0), (0, 10)]:
            with self.subTest(benign=benign, malignant=malignant), self.assertRaises(InputError):
                split_train_eval(_corpus(benign, malignant))
        with self.assertRaises(UsageError):
            split_train_eval(Dataset())

    def test_expected_counts(self):
        self.assertEqual(train_size(7909), 6327)
        unlabeled = [u for _, u in expected_curation_counts(6327).values()]
        self.assertEqual(unlabeled, [0, 3164, 3796, 4429, 5062, 5694, 6327])
        self.assertEqual(unlabeled_count(5, 0.5), 3)

    def test_curation_counts_and_conservation(self):
        train = _corpus(40, 60)
        for ts in TrainingSet:
            labeled, unlabeled, ledger = curate_training_set(train, ts, seed=7)
            with self.subTest(training_set=ts.name):
                expected = expected_curation_counts(len(train))[ts]
                self.assertEqual((len(labeled), len(unlabeled)), expected)
                self.assertEqual(ledger.total, len(train))
                for label in Label:
                    self.assertEqual(ledger.labeled[label] + ledger.unlabeled_before[label],
                                     train.counts()[label])
                self.assertTrue(all(s.label_source == LabelSource.Nothing for s in unlabeled))
                self.assertEqual(set(labeled.ids) | set(unlabeled.ids), set(train.ids))

    def test_curation_is_keyed_by_training_set(self):
        train = _corpus(40, 60)
        a = curate_training_set(train, TrainingSet.TS4, seed=7).unlabeled.ids
        self.assertEqual(a, curate_training_set(train, TrainingSet.TS4, seed=7).unlabeled.ids)
        self.assertNotEqual(a, curate_training_set(train, TrainingSet.TS4, seed=8).unlabeled.ids)

    def test_curation_does_not_read_hidden_labels(self):
        tripwire = Tripwire()
        labeled, unlabeled, ledger = curate_training_set(_corpus(10, 10), TrainingSet.TS6, seed=0,
                                                         tripwire=tripwire)
        merge_pseudo(labeled, Dataset([s.relabel(Label.Benign, LabelSource.Pseudo) for s in unlabeled]), ledger)
        self.assertEqual(tripwire.reads, 0)

    def test_merge_records_predictions(self):
        labeled, unlabeled, ledger = curate_training_set(_corpus(10, 10), TrainingSet.TS2, seed=0)
        relabeled = Dataset([s.relabel(Label.Malignant, LabelSource.Cluster) for s in unlabeled])
        merged = merge_pseudo(labeled, relabeled, ledger)
        self.assertEqual(len(merged), 20)
        self.assertEqual(ledger.predicted_after, {Label.Benign: 0, Label.Malignant: 10})
        self.assertEqual(ledger.merged[Label.Malignant], ledger.labeled[Label.Malignant] + 10)
        frame = ledger.to_frame()
        self.assertEqual(frame.loc["Total", "predicted_after"], 10)
        self.assertEqual(ledger.to_dict()["predicted_after"], {"B": 0, "M": 10})

    def test_merge_rejects_unlabeled(self):
        labeled, unlabeled, ledger = curate_training_set(_corpus(10, 10), TrainingSet.TS2, seed=0)
        with self.assertRaises(UsageError):
            merge_pseudo(labeled, unlabeled, ledger)

    def test_ledger_audit_detects_lost_samples(self):
        labeled, unlabeled, ledger = curate_training_set(_corpus(10, 10), TrainingSet.TS2, seed=0)
        partial = Dataset([s.relabel(Label.Benign, LabelSource.Pseudo) for s in unlabeled][:-1])
        with self.assertRaises(UsageError):
            merge_pseudo(labeled, partial, ledger)

if __name__ == '__main__':
    unittest.main()
