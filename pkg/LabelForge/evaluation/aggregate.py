# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

from decimal import Decimal
import numpy as np
import pandas as pd
from ..core.classutils import Setting, Rounding
from ..errors import UsageError

# accuracy (%) of the scaled convolutional backbone per corpus and setting,
# Semi-SL column at 70% unlabeled
SUMMARY_ACCURACIES = {
    Setting.SL: {"breast": 91.87, "lung": 90.59, "kidney": 98.23},
    Setting.SemiSL: {"breast": 91.02, "lung": 86.93, "kidney": 97.93},
    Setting.SelfSL: {"breast": 73.75, "lung": 81.87, "kidney": 90.43},
}
SUMMARY_MEANS = {Setting.SL: 93.56, Setting.SemiSL: 91.96, Setting.SelfSL: 82.01}

def mean_accuracy(values, rounding: Rounding = Rounding.HalfUp, places: int = 2) -> float:
    '''
    Arithmetic mean rounded for display.

    Parameters
    ----------
    values : array_like of float
        Accuracies, in percent or as fractions.
    rounding : Rounding, default: Rounding.HalfUp
        Decimal rounding rule applied to the exact mean of the decimal inputs.
        The Self-SL row of SUMMARY_ACCURACIES averages to 82.02 under HalfUp,
        Truncate gives the published 82.01.

    Examples
    --------
    >>> mean_accuracy([91.87, 90.59, 98.23])
    93.56
    >>> mean_accuracy([73.75, 81.87, 90.43], Rounding.Truncate)
    82.01
    '''
    values = [Decimal(str(v)) for v in np.asarray(values, dtype=np.float64).reshape(-1)]
    if not values:
        raise UsageError("mean_accuracy needs at least one value.")
    if not isinstance(rounding, Rounding):
        raise ValueError(f"Wrong rounding {rounding!r}, current possible roundings are "
                         f"{', '.join(r.name for r in Rounding)}.")
    return float(rounding.apply(sum(values) / len(values), places))

def setting_summary(accuracies: pd.DataFrame) -> pd.DataFrame:
    '''
    Spread of cell accuracies per learning setting.

    Parameters
    ----------
    accuracies : pandas.DataFrame
        One row per cell with columns ``setting`` and ``accuracy`` (percent).

    Returns
    -------
    pandas.DataFrame
        Indexed by setting in order of first appearance, with columns count,
        mean, var (population), standard_error and mean_accuracy (rounded for display).
    '''
    if accuracies.empty:
        raise UsageError("Cannot summarize an empty set of accuracies.")
    grouped = accuracies.groupby("setting", sort=False)["accuracy"]
    summary = grouped.agg(count="count", mean="mean", var=lambda s: s.var(ddof=0))
    summary["standard_error"] = np.sqrt(summary["var"] / summary["count"])
    summary["mean_accuracy"] = grouped.agg(mean_accuracy)
    return summary
