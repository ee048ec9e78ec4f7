# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple
import numpy as np
import pandas as pd
from .corpus import Dataset, Tripwire
from ..core.classutils import Label, LabelSource, TrainingSet, TrainingSetSpec
from ..core.rng import stream
from ..errors import InputError, StratificationError, UsageError

logger = logging.getLogger(__name__)

DEFAULT_TRAIN_FRACTION = 0.8

def _fraction(x: float) -> Fraction:
    return Fraction(str(x))

def train_size(n: int, train_fraction: float = DEFAULT_TRAIN_FRACTION) -> int:
    return math.floor(_fraction(train_fraction) * n)

def unlabeled_count(n: int, labeled_fraction: float) -> int:
    """round-half-away-from-zero of (1 - labeled_fraction) * n."""
    return math.floor((1 - _fraction(labeled_fraction)) * n + Fraction(1, 2))

def expected_curation_counts(n_train: int) -> dict[TrainingSet, tuple[int, int]]:
    '''
    Labeled and unlabeled counts of every training set for a train split of size n_train.

    Returns
    -------
    dict
        TrainingSet -> (labeled, unlabeled)
    '''
    counts = {}
    for ts in TrainingSet:
        u = unlabeled_count(n_train, ts.labeled_fraction)
        counts[ts] = (n_train - u, u)
    return counts

def _stratified_quota(class_sizes: dict[Label, int], train_fraction: float) -> dict[Label, int]:
    frac = _fraction(train_fraction)
    exact = {label: frac * n for label, n in class_sizes.items()}
    quota = {label: math.floor(v) for label, v in exact.items()}
    remainder = math.floor(frac * sum(class_sizes.values())) - sum(quota.values())
    # largest fractional part first, lower label index on ties
    for label in sorted(exact, key=lambda lb: (-(exact[lb] - quota[lb]), int(lb)))[:remainder]:
        quota[label] += 1
    return quota

def split_train_eval(dataset: Dataset, train_fraction: float = DEFAULT_TRAIN_FRACTION,
                     seed: int = 0) -> tuple[Dataset, Dataset]:
    '''
    Class-stratified train/eval partition.

    Parameters
    ----------
    dataset : Dataset
        Ground-truth labeled corpus.
    train_fraction : float, default: 0.8
        |train| = floor(train_fraction * N); each class contributes its own
        floored share, the leftover samples going to the largest fractional parts.
    seed : int
        Master seed; the same seed always yields the same partition.

    Raises
    ------
    InputError
        If the corpus does not hold both classes.
    StratificationError
        If a class holds fewer than 2 samples.
    '''
    if len(dataset) == 0:
        raise UsageError("Cannot split an empty dataset.")
    if not 0 < train_fraction < 1:
        raise UsageError(f"train_fraction must lie in (0, 1), got {train_fraction}.")
    labels = dataset.assigned_labels()
    members = {label: np.flatnonzero(labels == int(label)) for label in Label}
    members = {label: idx for label, idx in members.items() if len(idx) > 0}
    if len(members) < len(Label):
        raise InputError(f"A stratified split needs both classes, the corpus only holds "
                         f"{', '.join(label.name for label in members)}.")
    for label, idx in members.items():
        if len(idx) < 2:
            raise StratificationError(f"Class {label.name} has {len(idx)} sample, at least 2 are needed "
                                      f"for a stratified split.")
    quota = _stratified_quota({label: len(idx) for label, idx in members.items()}, train_fraction)

    rng = stream(seed, "split")
    train_mask = np.zeros(len(dataset), dtype=bool)
    for label, idx in members.items():
        train_mask[rng.permutation(idx)[:quota[label]]] = True
    train, held_out = dataset[np.flatnonzero(train_mask)], dataset[np.flatnonzero(~train_mask)]
    logger.info("Split %d samples into %d train / %d eval", len(dataset), len(train), len(held_out))
    return train, held_out

def _plain_counts(counts: dict[Label, int] | None) -> dict[str, int] | None:
    return None if counts is None else {label.token: int(counts[label]) for label in Label}

@dataclass
class CurationLedger:
    training_set: str
    labeled: dict[Label, int]
    unlabeled_before: dict[Label, int]
    predicted_after: dict[Label, int] | None = None

    @property
    def total(self) -> int:
        return sum(self.labeled.values()) + sum(self.unlabeled_before.values())

    @property
    def merged(self) -> dict[Label, int] | None:
        if self.predicted_after is None:
            return None
        return {label: self.labeled[label] + self.predicted_after[label] for label in Label}

    def record_after(self, relabeled: Dataset) -> "CurationLedger":
        self.predicted_after = relabeled.counts()
        return self.audit()

    def audit(self) -> "CurationLedger":
        if self.predicted_after is not None and \
                sum(self.predicted_after.values()) != sum(self.unlabeled_before.values()):
            raise UsageError(f"{self.training_set}: {sum(self.predicted_after.values())} predicted labels for "
                             f"{sum(self.unlabeled_before.values())} unlabeled samples.")
        return self

    def to_frame(self) -> pd.DataFrame:
        columns = {"labeled": self.labeled, "unlabeled_before": self.unlabeled_before}
        if self.predicted_after is not None:
            columns["predicted_after"] = self.predicted_after
        frame = pd.DataFrame({k: {label.name: v[label] for label in Label} for k, v in columns.items()})
        frame.loc["Total"] = frame.sum()
        return frame

    def to_dict(self) -> dict:
        return {
            "training_set": self.training_set,
            "labeled": _plain_counts(self.labeled),
            "unlabeled_before": _plain_counts(self.unlabeled_before),
            "predicted_after": _plain_counts(self.predicted_after),
        }

class CuratedSet(NamedTuple):
    labeled: Dataset
    unlabeled: Dataset
    ledger: CurationLedger

def curate_training_set(train: Dataset, spec: TrainingSet | TrainingSetSpec, seed: int = 0,
                        tripwire: Tripwire | None = None) -> CuratedSet:
    '''
    Draw the unlabeled share of a training set uniformly at random, class-blind.

    Unlabeled samples lose their label (source none) and keep the ground
    truth hidden behind the tripwire.
    '''
    if isinstance(spec, TrainingSet):
        spec = spec.spec
    if len(train) == 0:
        raise UsageError("Cannot curate a training set from an empty train split.")
    u = unlabeled_count(len(train), spec.labeled_fraction)
    rng = stream(seed, "curate", spec.name)
    unlabeled_mask = np.zeros(len(train), dtype=bool)
    unlabeled_mask[rng.choice(len(train), size=u, replace=False)] = True

    labeled = train[np.flatnonzero(~unlabeled_mask)]
    unlabeled = Dataset([s.strip(tripwire) for s in train[np.flatnonzero(unlabeled_mask)]], train.name)
    ledger = CurationLedger(training_set=spec.name.name, labeled=labeled.audit_counts(),
                            unlabeled_before=unlabeled.audit_counts())
    logger.info("Curated %s: %d labeled / %d unlabeled", spec.name.name, len(labeled), len(unlabeled))
    return CuratedSet(labeled, unlabeled, ledger)

def merge_pseudo(labeled: Dataset, relabeled: Dataset, ledger: CurationLedger | None = None) -> Dataset:
    bad = [s.id for s in relabeled
           if s.assigned_label is None or s.label_source not in (LabelSource.Pseudo, LabelSource.Cluster)]
    if bad:
        raise UsageError(f"{len(bad)} samples to merge carry no pseudo or cluster label (first: {bad[0]}).")
    if ledger is not None:
        ledger.record_after(relabeled)
    return labeled + relabeled
