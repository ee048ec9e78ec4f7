# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

import warnings
from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping
import numpy as np
import pandas as pd
from scipy.special import betainc
from scipy.stats import t
from ..errors import UsageError

DEFAULT_ALPHA = 0.05

def two_tailed_p(t_value: float, df: int) -> float:
    """P(|T| >= |t|) for Student's t with df degrees of freedom, via I_{df/(df+t^2)}(df/2, 1/2)."""
    if np.isinf(t_value):
        return 0.0
    return float(betainc(df / 2, 0.5, df / (df + t_value * t_value)))

@dataclass
class TTestResult:
    t_value: float
    degrees_of_freedom: int
    p_two_tailed: float
    alpha: float = DEFAULT_ALPHA
    infinite: bool = False
    critical_value: float = field(init=False)
    significant: bool = field(init=False)

    def __post_init__(self):
        self.critical_value = float(t.ppf(1 - self.alpha / 2, self.degrees_of_freedom))
        self.significant = bool(self.p_two_tailed < self.alpha)

    def to_series(self):
        return pd.Series({
            "t_value": self.t_value,
            "degrees_of_freedom": self.degrees_of_freedom,
            "p_two_tailed": self.p_two_tailed,
            "critical_value": self.critical_value,
            "significant": self.significant,
            })

    def to_dict(self) -> dict:
        return {
            "t_value": self.t_value if np.isfinite(self.t_value) else str(self.t_value),
            "degrees_of_freedom": self.degrees_of_freedom,
            "p_two_tailed": self.p_two_tailed,
            "alpha": self.alpha,
            "critical_value": self.critical_value,
            "significant": self.significant,
            "infinite": self.infinite,
        }

def paired_t_test(a, b, alpha: float = DEFAULT_ALPHA) -> TTestResult:
    '''
    Paired-sample Student t-test on d = a - b.

    Parameters
    ----------
    a : array_like of float
    b : array_like of float
        Same length as a, at least 2.
    alpha : float, default: 0.05
        Significance threshold for TTestResult.significant.

    Returns
    -------
    TTestResult
        t = mean(d) / (sd(d) / sqrt(n)), df = n - 1, two-tailed p. When every
        difference is equal, t is 0 with p = 1 for a zero difference and
        +-inf with p = 0 otherwise (flagged as infinite).

    Examples
    --------
    >>> paired_t_test([1, 2, 3], [2, 4, 6])
    TTestResult(t_value=-3.4641016151377553, degrees_of_freedom=2, p_two_tailed=0.07417990022744847, ...)
    '''
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if len(a) != len(b):
        raise UsageError(f"Paired samples must have equal lengths, got {len(a)} and {len(b)}.")
    if len(a) < 2:
        raise UsageError("A paired t-test needs at least two pairs.")
    d = a - b
    n = len(d)
    df = n - 1
    if np.all(d == d[0]):
        if d[0] == 0:
            return TTestResult(t_value=0.0, degrees_of_freedom=df, p_two_tailed=1.0, alpha=alpha)
        warnings.warn("Paired differences have zero variance, t is infinite.")
        return TTestResult(t_value=float(np.copysign(np.inf, d[0])), degrees_of_freedom=df, p_two_tailed=0.0,
                           alpha=alpha, infinite=True)
    t_value = float(np.mean(d) / (np.std(d, ddof=1) / np.sqrt(n)))
    return TTestResult(t_value=t_value, degrees_of_freedom=df, p_two_tailed=two_tailed_p(t_value, df), alpha=alpha)

def pairwise_t_tests(samples: Mapping[str, list[float]], alpha: float = DEFAULT_ALPHA) -> dict[str, TTestResult]:
    """Paired test for every pair of named vectors, keyed "first vs second"."""
    return {f"{x} vs {y}": paired_t_test(samples[x], samples[y], alpha) for x, y in combinations(samples, 2)}
