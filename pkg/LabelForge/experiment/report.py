# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable
import numpy as np
import pandas as pd
from .config import ExperimentConfig, FORMATS, cell_key
from ..core.classutils import Label, Setting, TrainingSet
from ..evaluation.aggregate import mean_accuracy, setting_summary
from ..evaluation.metrics import ConfusionCounts, Metrics
from ..evaluation.ttest import TTestResult, paired_t_test, pairwise_t_tests
from ..settings.supervised import TrainingHistory
from ..errors import ConfigurationError, ReportIOError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
ARTIFACT_VERSION = "1.0.0"

def percent(x: float | None) -> float | None:
    """Fraction as a percentage with two decimals, half-up."""
    return None if x is None else mean_accuracy([100.0 * x])

@dataclass
class CellResult:
    training_set: str
    preset: str
    setting: str
    status: str = "ok"
    counts: ConfusionCounts | None = None
    metrics: Metrics | None = None
    histories: dict[str, TrainingHistory] = field(default_factory=dict)
    ledger: dict | None = None
    ledger_audit: bool = False
    ground_truth_reads: int = 0
    ground_truth_labels: int = 0
    pseudo_labels: int = 0
    cluster_labels: int = 0
    label_accuracy: float | None = None
    error: str | None = None

    @property
    def key(self) -> str:
        return cell_key(self.training_set, self.preset)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def accuracy(self) -> float | None:
        return self.metrics.accuracy if self.metrics is not None else None

    @property
    def recall(self) -> float | None:
        return self.metrics.recall if self.metrics is not None else None

    def to_dict(self) -> dict:
        return {
            "training_set": self.training_set,
            "preset": self.preset,
            "setting": self.setting,
            "status": self.status,
            "counts": self.counts.to_dict() if self.counts is not None else None,
            "metrics": self.metrics.to_dict() if self.metrics is not None else None,
            "histories": {phase: h.to_dict() for phase, h in self.histories.items()},
            "ledger": self.ledger,
            "ledger_audit": self.ledger_audit,
            "provenance": {
                "ground_truth_reads": self.ground_truth_reads,
                "ground_truth_labels": self.ground_truth_labels,
                "pseudo_labels": self.pseudo_labels,
                "cluster_labels": self.cluster_labels,
                "label_accuracy": self.label_accuracy,
            },
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CellResult":
        counts = d.get("counts")
        metrics = d.get("metrics")
        provenance = d.get("provenance", {})
        return cls(
            training_set=d["training_set"], preset=d["preset"], setting=d["setting"], status=d["status"],
            counts=ConfusionCounts(counts["T_Pos"], counts["T_Neg"], counts["F_Pos"], counts["F_Neg"])
            if counts else None,
            metrics=Metrics(metrics["accuracy"], metrics["precision"], metrics["recall"], metrics["f1"],
                            tuple(metrics.get("degenerate", ()))) if metrics else None,
            histories={phase: TrainingHistory(**h) for phase, h in d.get("histories", {}).items()},
            ledger=d.get("ledger"),
            ledger_audit=d.get("ledger_audit", False),
            ground_truth_reads=provenance.get("ground_truth_reads", 0),
            ground_truth_labels=provenance.get("ground_truth_labels", 0),
            pseudo_labels=provenance.get("pseudo_labels", 0),
            cluster_labels=provenance.get("cluster_labels", 0),
            label_accuracy=provenance.get("label_accuracy"),
            error=d.get("error"),
        )

def _summary_sets(representative_semi: str) -> dict[Setting, str]:
    return {Setting.SL: TrainingSet.TS1.name, Setting.SemiSL: representative_semi, Setting.SelfSL: TrainingSet.TS7.name}

def _summary_column(setting: Setting, training_set: str) -> str:
    return f"{setting.title} ({setting.value}, {training_set})"

@dataclass
class ExperimentReport:
    config: dict
    cells: list[CellResult]
    setting_means: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    t_tests: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @classmethod
    def build(cls, config: ExperimentConfig, cells: list[CellResult], corpus_counts: dict[Label, int] | None = None,
              split: tuple[int, int] | None = None, timestamps: dict | None = None) -> "ExperimentReport":
        report = cls(config=config.to_dict(include_output=False), cells=list(cells))
        report.setting_means = report._setting_means()
        report.summary = report._summary(config.representative_semi)
        report.t_tests = report._t_tests(config.alpha)
        report.provenance = {
            "schema_version": SCHEMA_VERSION,
            "artifact_version": ARTIFACT_VERSION,
            "config_hash": config.config_hash(),
            "seed": config.seed,
            "cell_count": len(cells),
            "failed_cells": [c.key for c in cells if not c.ok],
            "ledger_audit": all(c.ledger_audit for c in cells if c.ok),
        }
        if corpus_counts is not None:
            report.provenance["corpus"] = {label.token: int(corpus_counts[label]) for label in Label}
        if split is not None:
            report.provenance["split"] = {"train": int(split[0]), "eval": int(split[1])}
        if timestamps:
            report.provenance["timestamps"] = timestamps
        return report

    @property
    def presets(self) -> list[str]:
        return list(self.config["presets"])

    @property
    def training_sets(self) -> list[str]:
        return list(self.config["training_sets"])

    def cell(self, training_set: str, preset: str) -> CellResult | None:
        key = cell_key(training_set, preset)
        return next((c for c in self.cells if c.key == key), None)

    def accuracy(self, training_set: str, preset: str) -> float | None:
        cell = self.cell(training_set, preset)
        return cell.accuracy if cell is not None else None

    def _setting_means(self) -> dict:
        accuracies = pd.DataFrame([{"setting": c.setting, "accuracy": percent(c.accuracy)} for c in self.cells if c.ok],
                                  columns=["setting", "accuracy"])
        if accuracies.empty:
            return {}
        summary = setting_summary(accuracies)
        order = [s.value for s in Setting if s.value in summary.index]
        return {setting: {"count": int(row["count"]), "mean": float(row["mean"]), "var": float(row["var"]),
                          "standard_error": float(row["standard_error"]),
                          "mean_accuracy": float(row["mean_accuracy"])}
                for setting, row in summary.loc[order].iterrows()}

    def _summary(self, representative_semi: str) -> dict:
        sets = _summary_sets(representative_semi)
        rows = {preset: {s.value: percent(self.accuracy(ts, preset)) for s, ts in sets.items()}
                for preset in self.presets}
        mean = {}
        for setting in sets:
            values = [row[setting.value] for row in rows.values() if row[setting.value] is not None]
            mean[setting.value] = mean_accuracy(values) if values else None
        best_semi = {}
        for preset in self.presets:
            semi = [c for c in self.cells if c.ok and c.preset == preset and c.setting == Setting.SemiSL.value]
            if semi:
                # highest accuracy, earliest training set on ties
                best_semi[preset] = max(semi, key=lambda c: (c.accuracy, -self.training_sets.index(c.training_set))).training_set
        return {"sets": {s.value: ts for s, ts in sets.items()}, "rows": rows, "mean": mean, "best_semi": best_semi}

    def _t_tests(self, alpha: float) -> dict:
        rows = self.summary.get("rows", {})
        vectors = {s.value: [row[s.value] for row in rows.values()] for s in Setting}
        vectors = {name: v for name, v in vectors.items() if v and all(x is not None for x in v)}
        if len(rows) < 2 or len(vectors) < 2:
            return {}
        return {name: result.to_dict() for name, result in pairwise_t_tests(vectors, alpha).items()}

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "config": self.config,
            "cells": [c.to_dict() for c in self.cells],
            "setting_means": self.setting_means,
            "summary": self.summary,
            "t_tests": self.t_tests,
            "provenance": self.provenance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ConfigurationError(f"Report schema version {d.get('schema_version')} is not supported "
                                     f"(expected {SCHEMA_VERSION}).")
        return cls(config=d["config"], cells=[CellResult.from_dict(c) for c in d["cells"]],
                   setting_means=d.get("setting_means", {}), summary=d.get("summary", {}),
                   t_tests=d.get("t_tests", {}), provenance=d.get("provenance", {}))

    @classmethod
    def from_json(cls, path) -> "ExperimentReport":
        try:
            with open(path, encoding="utf-8") as f:
                return cls.from_dict(json.load(f))
        except FileNotFoundError:
            raise ReportIOError(f"Report {path} not found.") from None
        except (json.JSONDecodeError, KeyError, TypeError) as err:
            raise ConfigurationError(f"Report {path} is not a valid LabelForge report: {err}") from None

    def grid_frame(self) -> pd.DataFrame:
        '''
        One row per backbone, accuracy (Ac) and recall (Rc) in percent per training set.
        '''
        frame = pd.DataFrame(index=pd.Index(self.presets, name="backbone"))
        for ts in self.training_sets:
            frame[f"{ts}_Ac"] = [percent(self.accuracy(ts, p)) for p in self.presets]
            frame[f"{ts}_Rc"] = [percent(self.cell(ts, p).recall) if self.cell(ts, p) else None for p in self.presets]
        return frame.astype(float)

    def summary_frame(self) -> pd.DataFrame:
        '''
        Accuracy per backbone for the three settings plus a Mean row.
        '''
        sets = {Setting(name): ts for name, ts in self.summary["sets"].items()}
        columns = {setting.value: _summary_column(setting, ts) for setting, ts in sets.items()}
        rows = {**self.summary["rows"], "Mean": self.summary["mean"]}
        frame = pd.DataFrame.from_dict(rows, orient="index").rename(columns=columns)
        frame.index.name = "backbone"
        return frame[list(columns.values())].astype(float)

    def plot_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "training_set": [c.training_set for c in self.cells],
            "backbone": [c.preset for c in self.cells],
            "accuracy": [percent(c.accuracy) for c in self.cells],
        }).astype({"accuracy": float})

    def ledger_frame(self) -> pd.DataFrame:
        rows = []
        for c in self.cells:
            if c.ledger is None:
                continue
            for label in Label:
                after = c.ledger["predicted_after"]
                rows.append({
                    "training_set": c.training_set,
                    "backbone": c.preset,
                    "class": label.name,
                    "labeled": c.ledger["labeled"][label.token],
                    "unlabeled_before": c.ledger["unlabeled_before"][label.token],
                    "predicted_after": after[label.token] if after is not None else None,
                })
        return pd.DataFrame(rows, columns=["training_set", "backbone", "class", "labeled", "unlabeled_before",
                                           "predicted_after"])

def _write_csv(frame: pd.DataFrame, path: Path, index: bool = False, float_format: str | None = "%.2f") -> Path:
    frame.to_csv(path, index=index, float_format=float_format, lineterminator="\n")
    return path

def emit_report(report: ExperimentReport, out_dir, formats: Iterable[str] = FORMATS) -> list[Path]:
    '''
    Write the report files.

    Parameters
    ----------
    report : ExperimentReport
    out_dir : path-like
        Created if missing.
    formats : iterable of str, default: json, csv, plotdata
        json writes report.json; csv writes grid.csv, summary.csv, ledger.csv and
        per-cell loss histories; plotdata writes plotdata.csv.

    Returns
    -------
    list of Path
        Written files. Identical reports always produce identical bytes.

    Raises
    ------
    ConfigurationError
        If an unknown format is requested.
    ReportIOError
        If the output directory cannot be written.
    '''
    formats = list(formats)
    unknown = [f for f in formats if f not in FORMATS]
    if unknown:
        raise ConfigurationError(f"Wrong report format {unknown[0]!r}, possible formats are {', '.join(FORMATS)}.")
    out_dir = Path(out_dir)
    written = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        if "json" in formats:
            path = out_dir / "report.json"
            with open(path, "w", encoding="utf-8", newline="\n") as f:
                f.write(report.to_json())
            written.append(path)
        if "csv" in formats:
            written.append(_write_csv(report.grid_frame(), out_dir / "grid.csv", index=True))
            written.append(_write_csv(report.summary_frame(), out_dir / "summary.csv", index=True))
            written.append(_write_csv(report.ledger_frame(), out_dir / "ledger.csv", float_format=None))
            history_dir = out_dir / "histories"
            history_dir.mkdir(exist_ok=True)
            for c in report.cells:
                for phase, history in c.histories.items():
                    path = history_dir / f"{c.training_set}_{c.preset}_{phase}.csv"
                    written.append(_write_csv(history.to_frame(), path, float_format=None))
        if "plotdata" in formats:
            written.append(_write_csv(report.plot_frame(), out_dir / "plotdata.csv"))
    except OSError as err:
        raise ReportIOError(f"Cannot write report to {out_dir}: {err}") from err
    logger.info("Wrote %d report files to %s", len(written), out_dir)
    return written

def compare_reports(a: ExperimentReport, b: ExperimentReport, alpha: float = 0.05) -> dict[str, TTestResult]:
    '''
    Paired t-tests of cell accuracies between two reports.

    Cells are paired by (training set, backbone); only cells that succeeded in
    both reports take part. One test per setting with at least two pairs, plus
    one over all pairs.
    '''
    pairs: dict[str, list[tuple[float, float]]] = {}
    for cell in a.cells:
        other = b.cell(cell.training_set, cell.preset)
        if not cell.ok or other is None or not other.ok:
            continue
        pairs.setdefault(cell.setting, []).append((cell.accuracy, other.accuracy))
    groups = {setting.value: pairs[setting.value] for setting in Setting if setting.value in pairs}
    groups["all"] = [p for group in groups.values() for p in group]
    results = {}
    for name, group in groups.items():
        if len(group) < 2:
            continue
        x, y = np.array(group).T
        results[name] = paired_t_test(x, y, alpha)
    return results

def comparison_frame(results: dict[str, TTestResult]) -> pd.DataFrame:
    frame = pd.DataFrame({name: r.to_series() for name, r in results.items()}).T
    frame.index.name = "comparison"
    return frame
