# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

from .core.classutils import Label, LabelSource, Setting, Family, TrainingSet, Refresh, Rounding
from .core.optim import SgdConfig
from .models.zoo import BackbonePreset, build_backbone, forward_classify, forward_embed
from .models.checkpoint import save_checkpoint, load_checkpoint
from .data.corpus import load_corpus, write_manifest
from .data.augment import AugmentPolicy, augment
from .data.curation import split_train_eval, curate_training_set, merge_pseudo
from .data.synthetic import synthesize_corpus
from .settings.supervised import SupervisedConfig, train_supervised
from .settings.pseudo_labeling import PseudoLabelConfig, alpha_schedule, joint_loss, pseudo_label, train_semi_supervised
from .settings.contrastive import ContrastiveConfig, nt_xent_loss, pretrain_contrastive
from .settings.clustering import cluster_label
from .evaluation.metrics import confusion, metrics
from .evaluation.ttest import paired_t_test
from .evaluation.aggregate import mean_accuracy
from .experiment.config import ExperimentConfig
from .experiment.runner import run_experiment
from .experiment.report import emit_report, compare_reports, ARTIFACT_VERSION as __version__
