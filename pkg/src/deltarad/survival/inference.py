"""Multiple-testing correction and analysis of covariance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..errors import OutOfRangeError, RankDeficientError, TooFewSamplesError


def bh_adjust(p_values) -> np.ndarray:
    """Benjamini-Hochberg step-up adjusted p-values, in input order."""
    p = np.asarray(p_values, dtype=np.float64).ravel()
    if p.size == 0:
        return p.copy()
    if np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise OutOfRangeError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    # dividing by i/m (not multiplying by m/i) keeps the largest p exact, so q >= p holds bitwise
    scaled = p[order] / (np.arange(1, m + 1) / m)
    adj = np.minimum(np.minimum.accumulate(scaled[::-1])[::-1], 1.0)
    out = np.empty(m)
    out[order] = adj
    return out


@dataclass(frozen=True)
class AncovaResult:
    F: float
    p_value: float
    group_effect: float
    df_num: int
    df_den: int


def ancova(y, group, covariates=None) -> AncovaResult:
    """F-test of the group term in ``y ~ 1 + group + covariates``."""
    y = np.asarray(y, dtype=np.float64).ravel()
    g = np.asarray(group, dtype=np.float64).ravel()
    n = y.size
    if not (np.any(g == 1) and np.any(g == 0)) or not np.all(np.isin(g, (0, 1))):
        raise TooFewSamplesError("group must be binary with both levels present")
    C = np.zeros((n, 0)) if covariates is None else np.asarray(covariates, dtype=np.float64).reshape(n, -1)
    reduced = np.column_stack([np.ones(n), C])
    full = np.column_stack([np.ones(n), g, C])
    p = full.shape[1]
    if np.linalg.matrix_rank(full) < p:
        raise RankDeficientError("design matrix is rank deficient")
    if n - p < 1:
        raise RankDeficientError(f"no residual degrees of freedom (n={n}, p={p})")
    coef, *_ = np.linalg.lstsq(full, y, rcond=None)
    rss_full = float(np.sum((y - full @ coef) ** 2))
    c_red, *_ = np.linalg.lstsq(reduced, y, rcond=None)
    rss_red = float(np.sum((y - reduced @ c_red) ** 2))
    df = n - p
    if rss_full == 0:
        F = 0.0 if rss_red == 0 else np.inf
    else:
        F = max(rss_red - rss_full, 0.0) / (rss_full / df)
    return AncovaResult(float(F), float(stats.f.sf(F, 1, df)), float(coef[1]), 1, df)
