# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

import os
import unittest
import numpy as np
from LabelForge.core.classutils import LabelSource, Refresh
from LabelForge.core.optim import SgdConfig
from LabelForge.core.rng import stream
from LabelForge.core.tensor import Tensor
from LabelForge.core import functional as F
from LabelForge.data.augment import AugmentPolicy
from LabelForge.data.corpus import Dataset, Tripwire
from LabelForge.data.synthetic import synthesize_corpus
from LabelForge.models.zoo import BackbonePreset, build_backbone, predict_embeddings
from LabelForge.settings.supervised import SupervisedConfig, train_supervised, assign_from_probabilities, \
    cycled_batches, training_accuracy
from LabelForge.settings.pseudo_labeling import PseudoLabelConfig, alpha_schedule, joint_loss, steps_per_epoch, \
    train_semi_supervised
from LabelForge.settings.contrastive import ContrastiveConfig, nt_xent_loss, positive_pairs, pretrain_contrastive, \
    contrastive_loss
from LabelForge.settings.clustering import ClusterLabeler, mapping_for, run_kmeans, cluster_label
from LabelForge.experiment.runner import label_accuracy
from LabelForge.errors import ConfigurationError, UsageError

SLOW = os.environ.get("LABELFORGE_SLOW_TESTS") == "1"
PRESET = BackbonePreset.named("mini-vgg", input_size=(8, 8, 3))

def _corpus(n: int, seed: int = 0) -> Dataset:
    return synthesize_corpus(n, size=(8, 8), seed=seed)

def _stripped(dataset: Dataset, tripwire: Tripwire | None = None) -> Dataset:
    return Dataset([s.strip(tripwire) for s in dataset])

def _clouds(n: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    points = rng.normal(scale=0.1, size=(n, 3)) + np.where(labels[:, None] == 1, 5.0, -5.0)
    return points, labels

class TestSupervised(unittest.TestCase):

    def test_argmax_ties_take_lower_class(self):
        np.testing.assert_array_equal(assign_from_probabilities([[0.5, 0.5], [0.2, 0.8]]), [0, 1])
        with self.assertRaises(UsageError):
            assign_from_probabilities(np.ones((2, 3)) / 3)

    def test_cycled_batches_cover_every_sample(self):
        batches = cycled_batches(5, 2, 4, stream(0, "test"))
        self.assertEqual([len(b) for b in batches], [2, 2, 2, 2])
        self.assertEqual(set(np.concatenate(batches[:2]).tolist()) | set(batches[2].tolist()), set(range(5)))

    def test_zero_epochs_leaves_model_untouched(self):
        model = build_backbone(PRESET, 0, with_projection=False)
        before = [p.data.copy() for p in model.parameters()]
        trained = train_supervised(model, _corpus(4), SupervisedConfig(epochs=0))
        self.assertEqual(len(trained.history), 0)
        for p, q in zip(trained.model.parameters(), before):
            np.testing.assert_array_equal(p.data, q)

    def test_empty_labeled_set(self):
        with self.assertRaises(UsageError):
            train_supervised(build_backbone(PRESET, 0), Dataset())

    def test_loss_decreases(self):
        config = SupervisedConfig(epochs=30, batch_size=10, sgd=SgdConfig(learning_rate=0.01))
        trained = train_supervised(build_backbone(PRESET, 1, with_projection=False), _corpus(10), config, seed=1)
        self.assertEqual(trained.history.epoch, list(range(30)))
        self.assertLess(trained.history.loss[-1], trained.history.loss[0])
        self.assertFalse(trained.model.training)

    def test_deterministic(self):
        config = SupervisedConfig(epochs=2, batch_size=4, augment=True)
        a = train_supervised(build_backbone(PRESET, 2, with_projection=False), _corpus(6), config, seed=3)
        b = train_supervised(build_backbone(PRESET, 2, with_projection=False), _corpus(6), config, seed=3)
        self.assertEqual(a.history.loss, b.history.loss)

    def test_config_roundtrip(self):
        config = SupervisedConfig(epochs=3, augment=True, policy=AugmentPolicy(shear=0.1, target_size=None))
        self.assertEqual(SupervisedConfig.from_dict(config.to_dict()), config)

    @unittest.skipUnless(SLOW, "set LABELFORGE_SLOW_TESTS=1 to run training oracles")
    def test_overfits_ten_samples(self):
        config = SupervisedConfig(epochs=200, batch_size=10, sgd=SgdConfig(learning_rate=0.01))
        data = _corpus(10)
        trained = train_supervised(build_backbone(PRESET, 0, with_projection=False), data, config)
        self.assertEqual(training_accuracy(trained.model, data), 1.0)

class TestPseudoLabeling(unittest.TestCase):

    def test_alpha_schedule(self):
        config = PseudoLabelConfig(alpha_f=3.0, T1=10, T2=20)
        self.assertEqual(alpha_schedule(5, config), 0.0)
        self.assertEqual(alpha_schedule(10, config), 0.0)
        self.assertAlmostEqual(alpha_schedule(15, config), 1.5)
        self.assertEqual(alpha_schedule(20, config), 3.0)
        self.assertEqual(alpha_schedule(99, config), 3.0)
        with self.assertRaises(UsageError):
            alpha_schedule(-1, config)

    def test_invalid_config(self):
        for kwargs in [{"T1": 20, "T2": 10}, {"alpha_f": 0.0}, {"num_classes": 3}, {"refresh": "sometimes"}]:
            with self.subTest(**kwargs), self.assertRaises(ConfigurationError):
                PseudoLabelConfig(**kwargs)
        self.assertEqual(PseudoLabelConfig(refresh="once").refresh, Refresh.Once)

    def test_joint_loss_without_unlabeled_term(self):
        logits = Tensor(np.array([[2.0, -1.0], [0.5, 0.5]]))
        supervised = F.softmax_cross_entropy(logits, [0, 1]).item()
        self.assertEqual(joint_loss(logits, [0, 1], Tensor(np.zeros((2, 2))), [1, 1], alpha=0.0).item(), supervised)
        self.assertEqual(joint_loss(logits, [0, 1], Tensor(np.zeros((0, 2))), [], alpha=2.0).item(), supervised)

    def test_joint_loss_uniform_logits(self):
        loss = joint_loss(Tensor(np.zeros((3, 2))), [0, 1, 0], Tensor(np.zeros((4, 2))), [1, 1, 0, 1], alpha=0.5)
        self.assertAlmostEqual(loss.item(), 1.5 * np.log(2.0), places=6)

    def test_steps_per_epoch(self):
        self.assertEqual(steps_per_epoch(10, 25, 4, 8), 4)
        self.assertEqual(steps_per_epoch(10, 0, 4, 8), 3)
        self.assertEqual(steps_per_epoch(10, 25, 4, 0), 3)

    def test_semi_supervised_run(self):
        corpus = _corpus(16)
        tripwire = Tripwire()
        labeled, unlabeled = corpus[:6], _stripped(corpus[6:], tripwire)
        config = PseudoLabelConfig(T1=1, T2=2, epochs=3, labeled_batch_size=4, unlabeled_batch_size=4)
        result = train_semi_supervised(PRESET, labeled, unlabeled, config, seed=5)
        self.assertEqual(result.relabeled.ids, unlabeled.ids)
        self.assertEqual(result.relabeled.count_sources()[LabelSource.Pseudo], 10)
        self.assertEqual(result.history.alpha, [0.0, 0.0, 3.0])
        self.assertEqual(tripwire.reads, 0)

        again = train_semi_supervised(PRESET, labeled, unlabeled, config, seed=5)
        self.assertEqual(again.history.loss, result.history.loss)
        np.testing.assert_array_equal(again.relabeled.assigned_labels(), result.relabeled.assigned_labels())

    def test_refresh_once(self):
        corpus = _corpus(12)
        config = PseudoLabelConfig(T1=0, T2=1, epochs=2, labeled_batch_size=4, unlabeled_batch_size=4,
                                   refresh=Refresh.Once)
        result = train_semi_supervised(PRESET, corpus[:4], _stripped(corpus[4:]), config, seed=0)
        self.assertEqual(len(result.relabeled), 8)
        self.assertEqual(len(result.history), 2)

    def test_needs_labeled_samples(self):
        with self.assertRaises(UsageError):
            train_semi_supervised(PRESET, Dataset(), _stripped(_corpus(4)), PseudoLabelConfig(epochs=1))

    @unittest.skipUnless(SLOW, "set LABELFORGE_SLOW_TESTS=1 to run training oracles")
    def test_pseudo_label_accuracy(self):
        corpus = synthesize_corpus(80, size=(8, 8), separability=2.0, seed=42)
        config = PseudoLabelConfig(T1=5, T2=20, epochs=30, labeled_batch_size=8, unlabeled_batch_size=8)
        result = train_semi_supervised(PRESET, corpus[:24], _stripped(corpus[24:]), config, seed=42)
        self.assertGreaterEqual(label_accuracy(result.relabeled), 0.9)

class TestContrastive(unittest.TestCase):

    def test_single_pair_has_zero_loss(self):
        z = Tensor(np.array([[1.0, 0.0], [0.0, 1.0]]))
        self.assertAlmostEqual(nt_xent_loss(z).item(), 0.0, places=6)

    def test_identical_views(self):
        z = Tensor(np.tile([[0.6, 0.8]], (4, 1)))
        self.assertAlmostEqual(nt_xent_loss(z, temperature=0.5).item(), np.log(3.0), places=5)

    def test_orthogonal_pairs(self):
        e1, e2 = [1.0, 0.0], [0.0, 1.0]
        z = Tensor(np.array([e1, e2, e1, e2]))
        expected = np.log((np.e ** 2 + 2) / np.e ** 2)
        self.assertAlmostEqual(nt_xent_loss(z, temperature=0.5).item(), expected, places=5)
        self.assertAlmostEqual(expected, 0.239498, places=6)

    def test_pairing(self):
        np.testing.assert_array_equal(positive_pairs(6), [3, 4, 5, 0, 1, 2])
        with self.assertRaises(UsageError):
            nt_xent_loss(Tensor(np.ones((3, 2))))
        with self.assertRaises(UsageError):
            nt_xent_loss(Tensor(np.eye(4)), pairing=[1, 2, 3, 0])

    def test_invalid_config(self):
        for kwargs in [{"batch_size": 3}, {"temperature": 0.0}, {"epochs": -1}]:
            with self.subTest(**kwargs), self.assertRaises(ConfigurationError):
                ContrastiveConfig(**kwargs)

    def test_pretraining(self):
        unlabeled = _stripped(_corpus(6))
        config = ContrastiveConfig(batch_size=4, epochs=2)
        result = pretrain_contrastive(PRESET, unlabeled, config, seed=1)
        fresh = build_backbone(PRESET, 1, with_projection=True)
        self.assertEqual(len(result.history), 2)
        np.testing.assert_array_equal(result.encoder.classifier.weight.data, fresh.classifier.weight.data)
        self.assertFalse(np.array_equal(result.encoder.projection[0].weight.data, fresh.projection[0].weight.data))
        self.assertTrue(np.isfinite(contrastive_loss(result.encoder, unlabeled, config, seed=1)))

        again = pretrain_contrastive(PRESET, unlabeled, config, seed=1)
        self.assertEqual(again.history.loss, result.history.loss)

    def test_too_few_samples(self):
        with self.assertRaises(UsageError):
            pretrain_contrastive(PRESET, _stripped(_corpus(3)), ContrastiveConfig(batch_size=8, epochs=1))

    def test_zero_epochs_keeps_initialization(self):
        result = pretrain_contrastive(PRESET, _stripped(_corpus(8)), ContrastiveConfig(batch_size=4, epochs=0), seed=2)
        fresh = build_backbone(PRESET, 2, with_projection=True)
        self.assertEqual(len(result.history), 0)
        for name, p in result.encoder.named_parameters().items():
            with self.subTest(parameter=name):
                np.testing.assert_array_equal(p.data, fresh.named_parameters()[name].data)

    def test_initial_loss_near_log_views(self):
        encoder = build_backbone(PRESET, 0, with_projection=True)
        loss = contrastive_loss(encoder, _stripped(_corpus(16)), ContrastiveConfig(batch_size=8), seed=0)
        self.assertAlmostEqual(loss / np.log(7.0), 1.0, delta=0.15)

    @unittest.skipUnless(SLOW, "set LABELFORGE_SLOW_TESTS=1 to run training oracles")
    def test_embeddings_group_by_class(self):
        corpus = synthesize_corpus(64, size=(8, 8), separability=2.0, seed=3)
        result = pretrain_contrastive(PRESET, _stripped(corpus), ContrastiveConfig(batch_size=16, epochs=20), seed=3)
        z = predict_embeddings(result.encoder, corpus.images())
        similarity = z @ z.T
        labels = corpus.assigned_labels()
        same = labels[:, None] == labels[None, :]
        off_diagonal = ~np.eye(len(labels), dtype=bool)
        self.assertGreater(similarity[same & off_diagonal].mean(), similarity[~same].mean())

class TestClustering(unittest.TestCase):

    def test_separated_clouds(self):
        points, labels = _clouds(40)
        labeler = ClusterLabeler.fit(points, points[:6], labels[:6], seed=0)
        np.testing.assert_array_equal(labeler.predict(points), labels)

    def test_order_does_not_change_labels(self):
        points, labels = _clouds(40, seed=1)
        order = np.random.default_rng(2).permutation(40)
        a = ClusterLabeler.fit(points, points[:6], labels[:6], seed=3).predict(points)
        b = ClusterLabeler.fit(points[order], points[:6], labels[:6], seed=3).predict(points[order])
        np.testing.assert_array_equal(a[order], b)

    def test_kmeans_deterministic(self):
        points, _ = _clouds(20)
        a, b = run_kmeans(points, 4), run_kmeans(points, 4)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])

    def test_tie_goes_to_malignant_centroid(self):
        centroids = np.array([[0.0, 0.0], [10.0, 0.0]])
        anchors = np.array([[10.0, 0.0], [10.0, 0.0]])
        np.testing.assert_array_equal(mapping_for(centroids, anchors, [0, 1]), [0, 1])
        np.testing.assert_array_equal(mapping_for(centroids[::-1].copy(), anchors, [0, 1]), [1, 0])

    def test_anchor_set_needs_both_classes(self):
        points, labels = _clouds(10)
        with self.assertRaises(UsageError):
            ClusterLabeler.fit(points, points[labels == 0], labels[labels == 0])

    def test_cluster_label(self):
        corpus = _corpus(16)
        tripwire = Tripwire()
        unlabeled = _stripped(corpus[:10], tripwire)
        encoder = build_backbone(PRESET, 0, with_projection=True)
        relabeled = cluster_label(encoder, unlabeled, corpus[10:], seed=0)
        self.assertEqual(relabeled.ids, unlabeled.ids)
        self.assertEqual(relabeled.count_sources()[LabelSource.Cluster], 10)
        self.assertEqual(sum(relabeled.counts().values()), 10)
        self.assertEqual(tripwire.reads, 0)

if __name__ == '__main__':
    unittest.main()
