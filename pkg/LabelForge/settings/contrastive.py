# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

# Contrastive pretraining on two augmented views per sample. A batch of M
# views stacks the first views of M/2 samples followed by their second views,
# so view i pairs with view (i + M/2) mod M. NT-Xent for the ordered pair
# (i, j) is -log(exp(sim(i, j)/t) / sum over k != i of exp(sim(i, k)/t)).

import logging
from dataclasses import dataclass, field, asdict, replace
from typing import NamedTuple
import numpy as np
from .supervised import TrainingHistory
from ..core.optim import Sgd, SgdConfig
from ..core.rng import stream
from ..core.tensor import Tensor, backward, no_grad
from ..core import functional as F
from ..data.augment import AugmentPolicy, augment_batch
from ..data.corpus import Dataset
from ..models.zoo import BackbonePreset, Model, build_backbone, forward_embed
from ..errors import ConfigurationError, UsageError

logger = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 0.5
MASK_VALUE = -1e9

@dataclass(frozen=True)
class ContrastiveConfig:
    temperature: float = DEFAULT_TEMPERATURE
    batch_size: int = 32
    epochs: int = 30
    policy: AugmentPolicy = field(default_factory=AugmentPolicy)
    sgd: SgdConfig = field(default_factory=SgdConfig)

    def __post_init__(self):
        if not self.temperature > 0:
            raise ConfigurationError(f"temperature must be positive, got {self.temperature}.")
        if self.batch_size < 2 or self.batch_size % 2:
            raise ConfigurationError(f"batch_size counts views and must be even and >= 2, got {self.batch_size}.")
        if self.epochs < 0:
            raise ConfigurationError(f"epochs must be non-negative, got {self.epochs}.")

    def to_dict(self) -> dict:
        return {**asdict(self), "policy": self.policy.to_dict(), "sgd": self.sgd.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "ContrastiveConfig":
        d = dict(d)
        if "policy" in d:
            d["policy"] = AugmentPolicy.from_dict(d["policy"])
        if "sgd" in d:
            d["sgd"] = SgdConfig(**d["sgd"])
        return cls(**d)

class ContrastiveResult(NamedTuple):
    encoder: Model
    history: TrainingHistory

def positive_pairs(m: int) -> np.ndarray:
    if m < 2 or m % 2:
        raise UsageError(f"Contrastive batches need an even number of views, got {m}.")
    return (np.arange(m) + m // 2) % m

def _check_pairing(pairing: np.ndarray, m: int):
    if pairing.shape != (m,) or np.any(pairing < 0) or np.any(pairing >= m):
        raise UsageError(f"Pairing must give one partner index in [0, {m}) per view.")
    idx = np.arange(m)
    if np.any(pairing == idx) or np.any(pairing[pairing] != idx):
        raise UsageError("Pairing is not a perfect matching of the views.")

def nt_xent_loss(embeddings: Tensor, pairing=None, temperature: float = DEFAULT_TEMPERATURE) -> Tensor:
    '''
    Normalized temperature-scaled cross-entropy over M unit-norm views.

    Parameters
    ----------
    embeddings : Tensor
        (M, d), rows L2-normalized; similarity is the dot product.
    pairing : array-like of int, optional
        pairing[i] is the positive partner of view i; defaults to positive_pairs(M).
    temperature : float, default: 0.5

    Returns
    -------
    Tensor
        Scalar mean over the M ordered positive pairs.
    '''
    m = embeddings.shape[0]
    if m < 2 or m % 2:
        raise UsageError(f"NT-Xent needs an even number of views, got {m}.")
    pairing = positive_pairs(m) if pairing is None else np.asarray(pairing, dtype=np.int64)
    _check_pairing(pairing, m)
    similarity = (embeddings @ embeddings.T) * (1.0 / temperature)
    logits = similarity.masked_fill(np.eye(m, dtype=bool), MASK_VALUE)
    return -F.log_softmax(logits).select(pairing).mean()

def encoder_parameters(encoder: Model) -> list[Tensor]:
    """Backbone and projection head; the classifier head takes no part in pretraining."""
    return [p for name, p in encoder.named_parameters().items() if not name.startswith("classifier.")]

def _two_views(encoder: Model, subset: Dataset, policy: AugmentPolicy, seed: int, epoch: int) -> np.ndarray:
    policy = replace(policy, target_size=encoder.preset.input_size[:2])
    return np.concatenate([augment_batch(subset, policy, seed, epoch, view=0),
                           augment_batch(subset, policy, seed, epoch, view=1)], axis=0)

def _half_batches(n: int, half: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[i * half:(i + 1) * half] for i in range(n // half)]

def contrastive_loss(encoder: Model, unlabeled: Dataset, config: ContrastiveConfig = ContrastiveConfig(),
                     seed: int = 0, epoch: int = 0) -> float:
    """Mean NT-Xent over one pass without updating the encoder."""
    half = config.batch_size // 2
    if len(unlabeled) < half:
        raise UsageError(f"{len(unlabeled)} samples cannot fill a half-batch of {half}.")
    was_training = encoder.training
    encoder.eval()
    losses = []
    try:
        with no_grad():
            for idx in _half_batches(len(unlabeled), half, stream(seed, "contrastive-order", epoch)):
                views = _two_views(encoder, unlabeled[idx], config.policy, seed, epoch)
                losses.append(nt_xent_loss(forward_embed(encoder, views), temperature=config.temperature).item())
    finally:
        encoder.train(was_training)
    return float(np.mean(losses))

def pretrain_contrastive(preset: BackbonePreset, unlabeled: Dataset, config: ContrastiveConfig = ContrastiveConfig(),
                         seed: int = 0) -> ContrastiveResult:
    '''
    Train backbone and projection head on NT-Xent over augmented view pairs.

    Each step draws M/2 samples without replacement and embeds two views of
    each; the trailing samples that cannot fill a half-batch sit out the epoch.
    Labels are never read.

    Raises
    ------
    UsageError
        If the unlabeled set cannot fill a half-batch.
    '''
    half = config.batch_size // 2
    if len(unlabeled) < half:
        raise UsageError(f"{len(unlabeled)} unlabeled samples cannot fill a half-batch of {half}.")
    encoder = build_backbone(preset, seed, with_projection=True)
    params = encoder_parameters(encoder)
    optimizer = Sgd(params, config.sgd)
    history = TrainingHistory()
    encoder.train()
    for epoch in range(config.epochs):
        batches = _half_batches(len(unlabeled), half, stream(seed, "contrastive-order", epoch))
        total = 0.0
        for idx in batches:
            views = _two_views(encoder, unlabeled[idx], config.policy, seed, epoch)
            loss = nt_xent_loss(forward_embed(encoder, views), temperature=config.temperature)
            backward(loss, params)
            optimizer.step()
            total += loss.item()
        history.record(epoch, total / len(batches))
        logger.debug("contrastive epoch %d loss %.6f", epoch, history.loss[-1])
    encoder.eval()
    return ContrastiveResult(encoder, history)
