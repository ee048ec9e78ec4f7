# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

import io
import json
import os
import tempfile
import unittest
from contextlib import redirect_stdout, redirect_stderr
from pathlib import Path
from unittest import mock
from LabelForge.cli import main
from LabelForge.data.corpus import load_corpus, write_manifest
from LabelForge.data.curation import unlabeled_count
from LabelForge.data.synthetic import synthesize_corpus
from LabelForge.experiment.config import ExperimentConfig, SyntheticSpec, threads_from_env, THREADS_ENV
from LabelForge.experiment.report import ExperimentReport, emit_report, compare_reports
from LabelForge.experiment.runner import run_experiment
from LabelForge.settings.contrastive import ContrastiveConfig
from LabelForge.settings.pseudo_labeling import PseudoLabelConfig
from LabelForge.settings.supervised import SupervisedConfig
from LabelForge.errors import ConfigurationError, ReportIOError

SLOW = os.environ.get("LABELFORGE_SLOW_TESTS") == "1"
N_TRAIN = 32
PRESETS = ("mini-vgg", "mini-res")
SETS = ("TS1", "TS4", "TS7")

def tiny_config(**changes) -> ExperimentConfig:
    config = ExperimentConfig(
        seed=1,
        synthetic=SyntheticSpec(n_samples=40, size=(8, 8)),
        presets=PRESETS,
        training_sets=SETS,
        input_size=(8, 8),
        supervised=SupervisedConfig(epochs=1, batch_size=8),
        pseudo=PseudoLabelConfig(T1=0, T2=1, epochs=2, labeled_batch_size=8, unlabeled_batch_size=8),
        contrastive=ContrastiveConfig(batch_size=8, epochs=1),
    )
    return config.override(**changes)

def _quiet(argv: list[str]) -> int:
    with redirect_stdout(io.StringIO()), redirect_stderr(io.StringIO()):
        return main(argv)

class TestExperimentConfig(unittest.TestCase):

    def test_json_roundtrip_and_hash(self):
        config = tiny_config()
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "config.json"
            path.write_text(json.dumps(config.to_dict()))
            restored = ExperimentConfig.from_json(path)
        self.assertEqual(restored, config)
        self.assertEqual(restored.config_hash(), config.config_hash())

    def test_hash_ignores_output_location(self):
        config = tiny_config()
        self.assertEqual(config.override(out_dir="elsewhere", formats=("json",)).config_hash(), config.config_hash())
        self.assertNotEqual(config.override(seed=2).config_hash(), config.config_hash())

    def test_invalid(self):
        with self.assertRaises(ConfigurationError):
            ExperimentConfig.from_dict({"seeds": 1})
        with self.assertRaises(ConfigurationError):
            ExperimentConfig(representative_semi="TS1")
        with self.assertRaises(ConfigurationError):
            ExperimentConfig(training_sets=("TS8",))
        with self.assertRaises(ConfigurationError):
            ExperimentConfig(presets=("mini-vit",))
        with self.assertRaises(ConfigurationError):
            ExperimentConfig(formats=("xml",))

    def test_cell_keys(self):
        self.assertEqual(tiny_config(presets=("mini-res",), training_sets=("TS2", "TS1")).cell_keys(),
                         ["TS2/mini-res", "TS1/mini-res"])

    def test_threads_from_env(self):
        with mock.patch.dict(os.environ, {THREADS_ENV: "3"}):
            self.assertEqual(threads_from_env(), 3)
        for raw in ("0", "many"):
            with mock.patch.dict(os.environ, {THREADS_ENV: raw}), self.assertRaises(ConfigurationError):
                threads_from_env()

class TestRunExperiment(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.config = tiny_config()
        cls.report = run_experiment(cls.config, threads=1)

    def test_grid(self):
        self.assertEqual([c.key for c in self.report.cells], self.config.cell_keys())
        self.assertEqual(len(self.report.cells), len(SETS) * len(PRESETS))
        for cell in self.report.cells:
            with self.subTest(cell=cell.key):
                self.assertTrue(cell.ok, cell.error)
                self.assertGreaterEqual(cell.accuracy, 0.0)
                self.assertLessEqual(cell.accuracy, 1.0)
                self.assertEqual(cell.counts.total, 8)
        self.assertEqual(self.report.provenance["failed_cells"], [])
        self.assertEqual(self.report.provenance["split"], {"train": N_TRAIN, "eval": 8})

    def test_label_provenance(self):
        for preset in PRESETS:
            sl, semi, self_sl = (self.report.cell(ts, preset) for ts in SETS)
            u = unlabeled_count(N_TRAIN, 0.3)
            with self.subTest(preset=preset):
                self.assertEqual(sl.ground_truth_labels, N_TRAIN)
                self.assertEqual((semi.ground_truth_labels, semi.pseudo_labels), (N_TRAIN - u, u))
                self.assertEqual((self_sl.ground_truth_labels, self_sl.cluster_labels), (0, N_TRAIN))
                self.assertIsNone(sl.label_accuracy)
                self.assertIsNotNone(self_sl.label_accuracy)
                self.assertIn("semi", semi.histories)
                self.assertIn("contrastive", self_sl.histories)

    def test_hidden_labels_never_read(self):
        self.assertTrue(all(c.ground_truth_reads == 0 for c in self.report.cells))
        self.assertTrue(self.report.provenance["ledger_audit"])

    def test_ledger_conservation(self):
        for cell in self.report.cells:
            ledger = cell.ledger
            with self.subTest(cell=cell.key):
                total = sum(ledger["labeled"].values()) + sum(ledger["unlabeled_before"].values())
                self.assertEqual(total, N_TRAIN)
                self.assertEqual(sum(ledger["predicted_after"].values()), sum(ledger["unlabeled_before"].values()))

    def test_summary_and_t_tests(self):
        summary = self.report.summary
        self.assertEqual(summary["sets"], {"SL": "TS1", "Semi-SL": "TS4", "Self-SL": "TS7"})
        self.assertEqual(set(summary["rows"]), set(PRESETS))
        self.assertEqual(summary["best_semi"], {p: "TS4" for p in PRESETS})
        self.assertEqual(set(self.report.t_tests), {"SL vs Semi-SL", "SL vs Self-SL", "Semi-SL vs Self-SL"})

    def test_thread_count_does_not_change_report(self):
        self.assertEqual(run_experiment(self.config, threads=3).to_json(), self.report.to_json())

    def test_failed_cell_is_isolated(self):
        config = self.config.override(training_sets=("TS1", "TS4"), fail_cells=("TS4/mini-vgg",))
        report = run_experiment(config, threads=2)
        failed = report.cell("TS4", "mini-vgg")
        self.assertEqual(failed.status, "failed")
        self.assertIn("Injected failure", failed.error)
        self.assertEqual(report.provenance["failed_cells"], ["TS4/mini-vgg"])
        for cell in report.cells:
            if cell.ok:
                self.assertEqual(cell.accuracy, self.report.accuracy(cell.training_set, cell.preset))

    def test_report_json_roundtrip(self):
        with tempfile.TemporaryDirectory() as tmp:
            emit_report(self.report, tmp, ["json"])
            restored = ExperimentReport.from_json(Path(tmp) / "report.json")
        self.assertEqual(restored.to_json(), self.report.to_json())
        self.assertNotIn("out_dir", restored.config)

    def test_emit_is_byte_identical(self):
        with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
            first = emit_report(self.report, a)
            second = emit_report(self.report, b)
            self.assertEqual([p.relative_to(a) for p in first], [p.relative_to(b) for p in second])
            for x, y in zip(first, second):
                with self.subTest(file=str(x.relative_to(a))):
                    self.assertEqual(x.read_bytes(), y.read_bytes())
            names = {p.name for p in first}
            self.assertTrue({"report.json", "grid.csv", "summary.csv", "ledger.csv", "plotdata.csv"} <= names)
            self.assertIn("TS4_mini-vgg_semi.csv", names)
            grid = (Path(a) / "grid.csv").read_text().splitlines()
            self.assertEqual(grid[0], "backbone,TS1_Ac,TS1_Rc,TS4_Ac,TS4_Rc,TS7_Ac,TS7_Rc")
            self.assertEqual(len(grid), 1 + len(PRESETS))
            summary = (Path(a) / "summary.csv").read_text().splitlines()
            self.assertTrue(summary[-1].startswith("Mean,"))
            self.assertEqual(len((Path(a) / "plotdata.csv").read_text().splitlines()), 1 + len(self.report.cells))

    def test_emit_errors(self):
        with self.assertRaises(ConfigurationError):
            emit_report(self.report, "unused", ["xml"])
        with tempfile.TemporaryDirectory() as tmp:
            blocker = Path(tmp) / "file"
            blocker.write_text("")
            with self.assertRaises(ReportIOError):
                emit_report(self.report, blocker, ["json"])

    def test_compare_identical_reports(self):
        results = compare_reports(self.report, self.report)
        self.assertEqual(set(results), {"SL", "Semi-SL", "Self-SL", "all"})
        for result in results.values():
            self.assertEqual(result.t_value, 0.0)
            self.assertEqual(result.p_two_tailed, 1.0)
        with tempfile.TemporaryDirectory() as tmp:
            emit_report(self.report, tmp, ["json"])
            path = str(Path(tmp) / "report.json")
            self.assertEqual(_quiet(["compare", path, path]), 0)

class TestSettingTrends(unittest.TestCase):

    @unittest.skipUnless(SLOW, "set LABELFORGE_SLOW_TESTS=1 to run the full synthetic grid")
    def test_supervised_leads_and_pseudo_labels_keep_up(self):
        report = run_experiment(ExperimentConfig(seed=42))
        self.assertEqual(report.provenance["split"], {"train": 500, "eval": 125})
        self.assertEqual(report.provenance["failed_cells"], [])
        mean = report.summary["mean"]
        sl, semi, self_sl = mean["SL"], mean["Semi-SL"], mean["Self-SL"]
        self.assertGreaterEqual(sl, 95.0)
        self.assertLessEqual(abs(sl - semi), 5.0)
        self.assertGreater(semi, self_sl)

class TestCommandLine(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_curate_train_only(self):
        manifest = write_manifest(synthesize_corpus(10, size=(8, 8), seed=0), self.dir / "manifest.csv")
        out = self.dir / "curated"
        self.assertEqual(_quiet(["curate", "--manifest", str(manifest), "--out", str(out), "--train-only",
                                 "--sets", "TS2,TS7", "--seed", "0"]), 0)
        self.assertEqual(len(load_corpus(out / "TS2" / "labeled.csv")), 5)
        unlabeled = load_corpus(out / "TS7" / "unlabeled.csv", allow_unlabeled=True)
        self.assertEqual(len(unlabeled), 10)
        self.assertTrue(all(s.assigned_label is None for s in unlabeled))
        ledgers = json.loads((out / "ledgers.json").read_text())
        self.assertEqual([entry["training_set"] for entry in ledgers], ["TS2", "TS7"])

    def test_usage_errors_exit_2(self):
        self.assertEqual(_quiet(["curate", "--manifest", str(self.dir / "missing.csv"), "--out", str(self.dir)]), 2)
        manifest = write_manifest(synthesize_corpus(10, size=(8, 8), seed=0), self.dir / "manifest.csv")
        self.assertEqual(_quiet(["curate", "--manifest", str(manifest), "--out", str(self.dir / "c"),
                                 "--sets", "TS9"]), 2)

    def test_run_all(self):
        config_path = self.dir / "config.json"
        config_path.write_text(json.dumps(tiny_config().to_dict()))
        out = self.dir / "run"
        self.assertEqual(_quiet(["run-all", "--config", str(config_path), "--out", str(out), "--sets", "TS1",
                                 "--presets", "mini-vgg", "--format", "json"]), 0)
        report = ExperimentReport.from_json(out / "report.json")
        self.assertEqual([c.key for c in report.cells], ["TS1/mini-vgg"])
        self.assertEqual(report.provenance["seed"], 1)

if __name__ == '__main__':
    unittest.main()
