# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

import logging
import traceback
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
import numpy as np
from .config import ExperimentConfig, cell_key
from .report import CellResult, ExperimentReport
from ..core.classutils import LabelSource, Setting, TrainingSet
from ..core.rng import derive_seed
from ..data.corpus import Dataset, Tripwire, load_corpus
from ..data.curation import split_train_eval, curate_training_set, merge_pseudo
from ..evaluation.metrics import evaluate
from ..models.zoo import BackbonePreset, build_backbone
from ..settings.supervised import train_supervised, predict_labels
from ..settings.pseudo_labeling import train_semi_supervised
from ..settings.contrastive import pretrain_contrastive
from ..settings.clustering import cluster_label

logger = logging.getLogger(__name__)

class InjectedFailure(RuntimeError):
    pass

def label_accuracy(relabeled: Dataset) -> float | None:
    """Exported labels against hidden ground truth, read through the audit accessor."""
    pairs = [(s.assigned_label, s.audit_label()) for s in relabeled if s.audit_label() is not None]
    if not pairs:
        return None
    return float(np.mean([assigned == truth for assigned, truth in pairs]))

def run_cell(config: ExperimentConfig, training_set: TrainingSet, preset: BackbonePreset,
             train: Dataset, eval_split: Dataset) -> CellResult:
    '''
    Curate one training set, run its learning setting, train and evaluate one backbone.

    Every random stream is keyed by (seed, training set, preset), so a cell's
    result does not depend on which other cells run or in what order. Any
    exception is caught and recorded on the result.
    '''
    key = cell_key(training_set, preset)
    setting = training_set.setting
    result = CellResult(training_set=training_set.name, preset=preset.name, setting=setting.value)
    tripwire = Tripwire()
    try:
        if key in config.fail_cells:
            raise InjectedFailure(f"Injected failure for cell {key}.")
        labeled, unlabeled, ledger = curate_training_set(train, training_set, config.seed, tripwire)
        cell_seed = derive_seed(config.seed, training_set.name, preset.name)
        model = build_backbone(preset, derive_seed(cell_seed, "final"), with_projection=False)

        if setting == Setting.SL:
            merged = merge_pseudo(labeled, Dataset(), ledger)
            relabeled = None
        elif setting == Setting.SemiSL:
            semi = train_semi_supervised(preset, labeled, unlabeled, config.pseudo, derive_seed(cell_seed, "semi"))
            result.histories["semi"] = semi.history
            relabeled = semi.relabeled
            merged = merge_pseudo(labeled, relabeled, ledger)
        else:
            pretrained = pretrain_contrastive(preset, unlabeled, config.contrastive,
                                              derive_seed(cell_seed, "contrastive"))
            result.histories["contrastive"] = pretrained.history
            relabeled = cluster_label(pretrained.encoder, unlabeled, eval_split, derive_seed(cell_seed, "kmeans"))
            merged = merge_pseudo(labeled, relabeled, ledger)
            model.load_backbone_from(pretrained.encoder)

        trained = train_supervised(model, merged, config.supervised, derive_seed(cell_seed, "supervised"))
        result.histories["final"] = trained.history
        result.counts, result.metrics = evaluate(predict_labels(trained.model, eval_split), eval_split.assigned_labels())

        result.ledger = ledger.audit().to_dict()
        result.ledger_audit = True
        sources = merged.count_sources()
        result.ground_truth_labels = sources[LabelSource.GroundTruth]
        result.pseudo_labels = sources[LabelSource.Pseudo]
        result.cluster_labels = sources[LabelSource.Cluster]
        result.label_accuracy = label_accuracy(relabeled) if relabeled is not None else None
        logger.info("Cell %s accuracy %.4f", key, result.metrics.accuracy)
    except Exception as err:
        result.status = "failed"
        result.error = traceback.format_exception_only(type(err), err)[-1].strip()
        logger.error("Cell %s failed:\n%s", key, traceback.format_exc())
    result.ground_truth_reads = tripwire.reads
    return result

def load_experiment_corpus(config: ExperimentConfig) -> Dataset:
    if config.manifest:
        return load_corpus(config.manifest)
    return config.synthetic.build(config.seed)

def run_experiment(config: ExperimentConfig, threads: int | None = None) -> ExperimentReport:
    '''
    Run the full grid: every selected training set times every selected preset.

    Parameters
    ----------
    config : ExperimentConfig
    threads : int, optional
        Cells evaluated concurrently; defaults to LABELFORGE_THREADS (1 when unset).
        The report does not depend on it.

    Returns
    -------
    ExperimentReport
    '''
    started = datetime.now(timezone.utc)
    corpus = load_experiment_corpus(config)
    train, eval_split = split_train_eval(corpus, config.train_fraction, config.seed)
    channels = corpus.image_shape[2]
    presets = config.backbone_presets(channels)
    cells = [(ts, preset) for ts in config.sets for preset in presets]
    threads = threads or config.threads()
    logger.info("Running %d cells on %d thread(s)", len(cells), threads)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(run_cell, config, ts, preset, train, eval_split) for ts, preset in cells]
        results = [future.result() for future in futures]

    failed = [r.key for r in results if not r.ok]
    if failed:
        logger.warning("%d of %d cells failed: %s", len(failed), len(results), ", ".join(failed))
    timestamps = None
    if config.record_timestamps:
        timestamps = {"started_at": started.isoformat(), "finished_at": datetime.now(timezone.utc).isoformat()}
    return ExperimentReport.build(config, results, corpus_counts=corpus.counts(), split=(len(train), len(eval_split)),
                                  timestamps=timestamps)
