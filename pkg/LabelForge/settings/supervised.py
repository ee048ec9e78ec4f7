# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

import logging
import math
from dataclasses import dataclass, field, asdict, replace
from typing import NamedTuple
import numpy as np
import pandas as pd
from ..core.classutils import Label
from ..core.optim import Sgd, SgdConfig
from ..core.rng import stream
from ..core.tensor import backward
from ..core import functional as F
from ..data.augment import AugmentPolicy, augment_batch, resize_batch
from ..data.corpus import Dataset
from ..models.zoo import Model, predict_proba
from ..errors import ConfigurationError, UsageError

logger = logging.getLogger(__name__)

DEFAULT_EPOCHS = 30
DEFAULT_BATCH_SIZE = 32

@dataclass(frozen=True)
class SupervisedConfig:
    epochs: int = DEFAULT_EPOCHS
    batch_size: int = DEFAULT_BATCH_SIZE
    sgd: SgdConfig = field(default_factory=SgdConfig)
    augment: bool = False
    policy: AugmentPolicy = field(default_factory=AugmentPolicy)

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigurationError(f"epochs must be non-negative, got {self.epochs}.")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be positive, got {self.batch_size}.")

    def to_dict(self) -> dict:
        return {**asdict(self), "sgd": self.sgd.to_dict(), "policy": self.policy.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "SupervisedConfig":
        d = dict(d)
        if "sgd" in d:
            d["sgd"] = SgdConfig(**d["sgd"])
        if "policy" in d:
            d["policy"] = AugmentPolicy.from_dict(d["policy"])
        return cls(**d)

@dataclass
class TrainingHistory:
    epoch: list[int] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)
    alpha: list[float] = field(default_factory=list)

    def record(self, epoch: int, loss: float, alpha: float = 0.0):
        self.epoch.append(int(epoch))
        self.loss.append(float(loss))
        self.alpha.append(float(alpha))

    def __len__(self):
        return len(self.epoch)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"epoch": self.epoch, "loss": self.loss, "alpha": self.alpha})

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False)

    def to_dict(self) -> dict:
        return asdict(self)

class TrainedModel(NamedTuple):
    model: Model
    history: TrainingHistory

def input_size(model: Model) -> tuple[int, int]:
    return model.preset.input_size[:2]

def model_images(model: Model, dataset: Dataset) -> np.ndarray:
    """Un-augmented batch resized to the model input."""
    return resize_batch(dataset, input_size(model))

def epoch_images(model: Model, dataset: Dataset, config: SupervisedConfig, seed: int, epoch: int,
                 base: np.ndarray | None = None) -> np.ndarray:
    if config.augment:
        return augment_batch(dataset, replace(config.policy, target_size=input_size(model)), seed, epoch)
    return base if base is not None else model_images(model, dataset)

def batch_order(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]

def cycled_batches(n: int, batch_size: int, steps: int, rng: np.random.Generator) -> list[np.ndarray]:
    """steps batches drawn from back-to-back permutations of range(n)."""
    batch_size = min(batch_size, n)
    rounds = math.ceil(steps * batch_size / n) if n else 0
    order = np.concatenate([rng.permutation(n) for _ in range(rounds)]) if rounds else np.zeros(0, dtype=np.int64)
    return [order[i * batch_size:(i + 1) * batch_size] for i in range(steps)]

def assign_from_probabilities(probs: np.ndarray) -> np.ndarray:
    """Hard class per row; np.argmax keeps the lowest index on ties."""
    probs = np.asarray(probs)
    if probs.ndim != 2 or probs.shape[1] != len(Label):
        raise UsageError(f"Expected (N, {len(Label)}) class probabilities, got {probs.shape}.")
    return np.argmax(probs, axis=1).astype(np.int64)

def predict_labels(model: Model, dataset: Dataset) -> np.ndarray:
    if len(dataset) == 0:
        return np.zeros(0, dtype=np.int64)
    return assign_from_probabilities(predict_proba(model, model_images(model, dataset)))

def training_accuracy(model: Model, dataset: Dataset) -> float:
    """Agreement between predictions and the labels the learner was given."""
    return float(np.mean(predict_labels(model, dataset) == dataset.assigned_labels()))

def train_supervised(model: Model, labeled: Dataset, config: SupervisedConfig = SupervisedConfig(),
                     seed: int = 0) -> TrainedModel:
    '''
    Minibatch SGD on softmax cross-entropy over the assigned labels.

    Parameters
    ----------
    model : Model
        Trained in place.
    labeled : Dataset
        Every sample must carry an assigned label (ground truth, pseudo or cluster).
    config : SupervisedConfig
    seed : int
        Keys the batch order and augmentation streams.

    Returns
    -------
    TrainedModel
        The model and its per-epoch mean loss history.
    '''
    if len(labeled) == 0:
        raise UsageError("train_supervised needs at least one labeled sample.")
    targets = labeled.assigned_labels()
    history = TrainingHistory()
    if config.epochs == 0:
        return TrainedModel(model, history)

    base = None if config.augment else model_images(model, labeled)
    params = model.parameters()
    optimizer = Sgd(params, config.sgd)
    model.train()
    for epoch in range(config.epochs):
        images = epoch_images(model, labeled, config, seed, epoch, base)
        total = 0.0
        for idx in batch_order(len(labeled), config.batch_size, stream(seed, "supervised-order", epoch)):
            loss = F.softmax_cross_entropy(model.logits(images[idx]), targets[idx])
            backward(loss, params)
            optimizer.step()
            total += loss.item() * len(idx)
        history.record(epoch, total / len(labeled))
        logger.debug("supervised epoch %d loss %.6f", epoch, history.loss[-1])
    model.eval()
    return TrainedModel(model, history)
