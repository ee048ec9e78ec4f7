# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

from .zoo import (BackbonePreset, Model, build_backbone, forward_classify, forward_embed,
                  predict_proba, predict_embeddings)
from .checkpoint import Checkpoint, save_checkpoint, load_checkpoint, read_checkpoint
