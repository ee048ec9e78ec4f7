# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

from .supervised import (SupervisedConfig, TrainingHistory, TrainedModel, train_supervised, predict_labels,
                         training_accuracy, assign_from_probabilities)
from .pseudo_labeling import (PseudoLabelConfig, SemiSupervisedResult, alpha_schedule, joint_loss, pseudo_label,
                              train_semi_supervised)
from .contrastive import (ContrastiveConfig, ContrastiveResult, positive_pairs, nt_xent_loss, contrastive_loss,
                          pretrain_contrastive)
from .clustering import ClusterLabeler, mapping_for, run_kmeans, cluster_label
