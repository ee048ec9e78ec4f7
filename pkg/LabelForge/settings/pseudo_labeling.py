# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

# Pseudo-labeling: the network's own argmax on unlabeled samples becomes a
# training target, weighted by a coefficient ramped up from 0 to alpha_f
# between epochs T1 and T2:
#   L = CE(labeled) + alpha(t) * CE(unlabeled, pseudo-labels)

import logging
import math
from dataclasses import dataclass, field, asdict
from typing import NamedTuple
import numpy as np
from .supervised import (TrainingHistory, model_images, assign_from_probabilities, cycled_batches)
from ..core.classutils import Label, LabelSource, Refresh
from ..core.optim import Sgd, SgdConfig
from ..core.rng import stream
from ..core.tensor import Tensor, backward
from ..core import functional as F
from ..data.corpus import Dataset
from ..models.zoo import BackbonePreset, Model, NUM_CLASSES, build_backbone, predict_proba
from ..errors import ConfigurationError, UsageError

logger = logging.getLogger(__name__)

DEFAULT_ALPHA_F = 3.0
DEFAULT_T1 = 10
DEFAULT_T2 = 40
DEFAULT_EPOCHS = 50

@dataclass(frozen=True)
class PseudoLabelConfig:
    alpha_f: float = DEFAULT_ALPHA_F
    T1: int = DEFAULT_T1
    T2: int = DEFAULT_T2
    epochs: int = DEFAULT_EPOCHS
    labeled_batch_size: int = 32
    unlabeled_batch_size: int = 32
    num_classes: int = NUM_CLASSES
    refresh: Refresh = Refresh.PerEpoch
    sgd: SgdConfig = field(default_factory=SgdConfig)

    def __post_init__(self):
        if not isinstance(self.refresh, Refresh):
            try:
                object.__setattr__(self, "refresh", Refresh(self.refresh))
            except ValueError:
                raise ConfigurationError(f"Wrong refresh mode {self.refresh!r}, possible modes are "
                                         f"{', '.join(r.value for r in Refresh)}.") from None
        if not self.alpha_f > 0:
            raise ConfigurationError(f"alpha_f must be positive, got {self.alpha_f}.")
        if not 0 <= self.T1 < self.T2:
            raise ConfigurationError(f"Ramp needs 0 <= T1 < T2, got T1={self.T1}, T2={self.T2}.")
        if self.labeled_batch_size < 1 or self.unlabeled_batch_size < 0:
            raise ConfigurationError("labeled_batch_size must be >= 1 and unlabeled_batch_size >= 0.")
        if self.num_classes != NUM_CLASSES:
            raise ConfigurationError(f"Only {NUM_CLASSES}-class problems are supported, got {self.num_classes}.")
        if self.epochs < 0:
            raise ConfigurationError(f"epochs must be non-negative, got {self.epochs}.")

    def to_dict(self) -> dict:
        return {**asdict(self), "refresh": self.refresh.value, "sgd": self.sgd.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "PseudoLabelConfig":
        d = dict(d)
        if "sgd" in d:
            d["sgd"] = SgdConfig(**d["sgd"])
        return cls(**d)

class SemiSupervisedResult(NamedTuple):
    relabeled: Dataset
    model: Model
    history: TrainingHistory

def alpha_schedule(epoch: int, config: PseudoLabelConfig = PseudoLabelConfig()) -> float:
    if epoch < 0:
        raise UsageError(f"Epoch must be non-negative, got {epoch}.")
    if epoch < config.T1:
        return 0.0
    if epoch >= config.T2:
        return float(config.alpha_f)
    return config.alpha_f * (epoch - config.T1) / (config.T2 - config.T1)

def joint_loss(labeled_logits: Tensor, labeled_targets, unlabeled_logits: Tensor | None = None,
               pseudo_targets=None, alpha: float = 0.0) -> Tensor:
    '''
    Mean labeled cross-entropy plus alpha times mean cross-entropy against pseudo-labels.

    The unlabeled term is dropped entirely when alpha is 0 or the unlabeled
    batch is empty, so the result is then exactly the supervised loss.
    '''
    supervised = F.softmax_cross_entropy(labeled_logits, labeled_targets)
    if alpha == 0 or unlabeled_logits is None or unlabeled_logits.shape[0] == 0:
        return supervised
    return supervised + F.softmax_cross_entropy(unlabeled_logits, pseudo_targets) * alpha

def pseudo_targets(model: Model, images: np.ndarray) -> np.ndarray:
    return assign_from_probabilities(predict_proba(model, images))

def pseudo_label(model: Model, unlabeled: Dataset) -> Dataset:
    if len(unlabeled) == 0:
        return Dataset((), unlabeled.name)
    labels = pseudo_targets(model, model_images(model, unlabeled))
    return Dataset([s.relabel(Label(int(y)), LabelSource.Pseudo) for s, y in zip(unlabeled, labels)],
                   unlabeled.name)

def steps_per_epoch(n_labeled: int, n_unlabeled: int, k: int, k_u: int) -> int:
    steps = math.ceil(n_labeled / k)
    if k_u > 0 and n_unlabeled > 0:
        steps = max(steps, math.ceil(n_unlabeled / k_u))
    return steps

def train_semi_supervised(preset: BackbonePreset, labeled: Dataset, unlabeled: Dataset,
                          config: PseudoLabelConfig = PseudoLabelConfig(), seed: int = 0) -> SemiSupervisedResult:
    '''
    Warm up on the labeled share, then train on the joint loss with pseudo-labels.

    Epochs before T1 see the labeled batches only. From T1 on, every step pairs a
    labeled batch of size k with an unlabeled batch of size k'; pseudo-labels are
    recomputed from the current model at the start of every epoch (Refresh.PerEpoch)
    or once when the ramp starts (Refresh.Once). The final model's hard labels are
    exported for the merge.

    Returns
    -------
    SemiSupervisedResult
        (relabeled unlabeled set, model, per-epoch history with alpha)

    Raises
    ------
    UsageError
        If the labeled set is empty.
    '''
    if len(labeled) == 0:
        raise UsageError("Semi-supervised training needs labeled samples; a fully unlabeled set is Self-SL.")
    model = build_backbone(preset, seed, with_projection=False)
    targets = labeled.assigned_labels()
    l_images = model_images(model, labeled)
    u_images = model_images(model, unlabeled)
    k, k_u = config.labeled_batch_size, config.unlabeled_batch_size
    use_unlabeled = len(unlabeled) > 0 and k_u > 0

    params = model.parameters()
    optimizer = Sgd(params, config.sgd)
    history = TrainingHistory()
    current = None
    for epoch in range(config.epochs):
        alpha = alpha_schedule(epoch, config)
        joint = alpha > 0 and use_unlabeled
        if joint and (current is None or config.refresh == Refresh.PerEpoch):
            current = pseudo_targets(model, u_images)
        model.train()
        steps = steps_per_epoch(len(labeled), len(unlabeled) if joint else 0, k, k_u)
        l_batches = cycled_batches(len(labeled), k, steps, stream(seed, "semi-labeled", epoch))
        u_batches = cycled_batches(len(unlabeled), k_u, steps, stream(seed, "semi-unlabeled", epoch)) \
            if joint else [None] * steps
        total = 0.0
        for l_idx, u_idx in zip(l_batches, u_batches):
            if u_idx is None:
                loss = joint_loss(model.logits(l_images[l_idx]), targets[l_idx])
            else:
                loss = joint_loss(model.logits(l_images[l_idx]), targets[l_idx],
                                  model.logits(u_images[u_idx]), current[u_idx], alpha)
            backward(loss, params)
            optimizer.step()
            total += loss.item()
        history.record(epoch, total / steps, alpha)
        logger.debug("semi-supervised epoch %d loss %.6f alpha %.3f", epoch, history.loss[-1], alpha)
    model.eval()

    relabeled = pseudo_label(model, unlabeled)
    counts = relabeled.counts()
    logger.info("Pseudo-labeled %d samples (B: %d, M: %d)", len(relabeled), counts[Label.Benign],
                counts[Label.Malignant])
    return SemiSupervisedResult(relabeled, model, history)
