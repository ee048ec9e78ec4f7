# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

import warnings
from dataclasses import dataclass, field
import numpy as np
import pandas as pd
from ..core.classutils import Label
from ..errors import UsageError

def _outcome_matrix(predictions: np.ndarray, truth: np.ndarray, c: int) -> np.ndarray:
    """c x c counts, rows indexed by prediction and columns by truth."""
    return np.bincount(predictions * c + truth, minlength=c * c).reshape(c, c)

@dataclass(frozen=True)
class ConfusionCounts:
    t_pos: int
    t_neg: int
    f_pos: int
    f_neg: int

    def __post_init__(self):
        if min(self.t_pos, self.t_neg, self.f_pos, self.f_neg) < 0:
            raise UsageError(f"Confusion counts must be non-negative, got {self}.")

    @property
    def total(self) -> int:
        return self.t_pos + self.t_neg + self.f_pos + self.f_neg

    def to_series(self):
        return pd.Series({
            "T_Pos": self.t_pos,
            "T_Neg": self.t_neg,
            "F_Pos": self.f_pos,
            "F_Neg": self.f_neg,
            })

    def to_dict(self) -> dict:
        return {k: int(v) for k, v in self.to_series().items()}

def confusion(predictions, truth, positive_class: Label = Label.Malignant) -> ConfusionCounts:
    '''
    Count the four outcomes of a binary prediction.

    Parameters
    ----------
    predictions : array_like of int
        Predicted class indices.
    truth : array_like of int
        True class indices, same length as predictions.
    positive_class : Label, default: Label.Malignant
        Class counted as positive.

    Returns
    -------
    ConfusionCounts

    Raises
    ------
    UsageError
        If lengths differ, are zero, or a value is not a class index.
    '''
    predictions = np.asarray(predictions, dtype=np.int64).reshape(-1)
    truth = np.asarray(truth, dtype=np.int64).reshape(-1)
    if len(predictions) != len(truth) or len(truth) == 0:
        raise UsageError(f"Need equal non-zero lengths, got {len(predictions)} predictions for {len(truth)} labels.")
    c = len(Label)
    if np.any((predictions < 0) | (predictions >= c)) or np.any((truth < 0) | (truth >= c)):
        raise UsageError(f"Class indices must lie in [0, {c}).")
    outcomes = _outcome_matrix(predictions, truth, c)
    pos = int(positive_class)
    neg = 1 - pos
    return ConfusionCounts(t_pos=int(outcomes[pos, pos]), t_neg=int(outcomes[neg, neg]),
                           f_pos=int(outcomes[pos, neg]), f_neg=int(outcomes[neg, pos]))

@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    degenerate: tuple[str, ...] = field(default=())

    def to_series(self):
        return pd.Series({
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "degenerate": ",".join(self.degenerate),
            })

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "precision": self.precision, "recall": self.recall,
                "f1": self.f1, "degenerate": list(self.degenerate)}

def _ratio(num: int, den: int | float) -> float:
    return float(num / den) if den else 0.0

def metrics(counts: ConfusionCounts) -> Metrics:
    '''
    Accuracy, precision, recall and F1 of the positive class.

    A metric whose denominator is zero is reported as 0 and named in
    Metrics.degenerate.
    '''
    if counts.total == 0:
        raise UsageError("Metrics of an empty confusion matrix are undefined.")
    degenerate = []
    accuracy = (counts.t_pos + counts.t_neg) / counts.total
    if counts.t_pos + counts.f_pos == 0:
        degenerate.append("precision")
    if counts.t_pos + counts.f_neg == 0:
        degenerate.append("recall")
    precision = _ratio(counts.t_pos, counts.t_pos + counts.f_pos)
    recall = _ratio(counts.t_pos, counts.t_pos + counts.f_neg)
    if precision + recall == 0:
        degenerate.append("f1")
    f1 = _ratio(2 * precision * recall, precision + recall)
    if degenerate:
        warnings.warn(f"Zero denominator for {', '.join(degenerate)}, reported as 0.")
    return Metrics(accuracy=float(accuracy), precision=precision, recall=recall, f1=f1, degenerate=tuple(degenerate))

def evaluate(predictions, truth, positive_class: Label = Label.Malignant) -> tuple[ConfusionCounts, Metrics]:
    counts = confusion(predictions, truth, positive_class)
    return counts, metrics(counts)
