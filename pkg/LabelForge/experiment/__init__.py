# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

from .config import ExperimentConfig, SyntheticSpec, cell_key, threads_from_env
from .report import (CellResult, ExperimentReport, SCHEMA_VERSION, emit_report, compare_reports,
                     comparison_frame)
from .runner import run_cell, run_experiment
