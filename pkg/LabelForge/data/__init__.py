# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

from .corpus import (Sample, Dataset, Tripwire, REFERENCE_CLASS_COUNTS, load_corpus, write_manifest,
                     read_image, read_raw_image, write_raw_image, class_counts_frame)
from .augment import (AugmentPolicy, AffineParams, apply_affine, augment, augment_batch, resize_batch,
                      sample_stream)
from .curation import (CurationLedger, CuratedSet, split_train_eval, curate_training_set, merge_pseudo,
                       unlabeled_count, train_size, expected_curation_counts)
from .synthetic import synthesize_corpus, synthesize_sample
