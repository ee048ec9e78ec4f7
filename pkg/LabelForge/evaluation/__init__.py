# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

from .metrics import ConfusionCounts, Metrics, confusion, metrics, evaluate
from .ttest import TTestResult, paired_t_test, pairwise_t_tests, two_tailed_p
from .aggregate import mean_accuracy, setting_summary, SUMMARY_ACCURACIES, SUMMARY_MEANS
