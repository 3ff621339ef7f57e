"""Pearson collinearity pruning of a feature set."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, NamedTuple

import numpy as np
import pandas as pd

from .errors import ConfigError, TooFewSamplesError
from .tables import write_csv

log = logging.getLogger(__name__)


class Drop(NamedTuple):
    feature: str
    partner: str
    abs_r: float
    reason: str


@dataclass
class CollinearityReport:
    corr: pd.DataFrame
    kept: List[str]
    dropped: List[Drop] = field(default_factory=list)
    threshold: float = 0.90
    mode: str = "literal"

    def dropped_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.dropped, columns=list(Drop._fields))

    def to_csv(self, corr_path, decisions_path=None):
        write_csv(self.corr.reset_index().rename(columns={"index": "feature"}), corr_path)
        if decisions_path is not None:
            write_csv(self.dropped_frame(), decisions_path)


def pearson_matrix(X: pd.DataFrame) -> pd.DataFrame:
    """Sample Pearson correlation of every column pair.

    Zero-variance columns get NaN rows/columns (diagonal included) and a
    warning; ``prune_collinear`` reports them as dropped.
    """
    if len(X) < 3:
        raise TooFewSamplesError(f"need >= 3 samples, got {len(X)}")
    A = X.to_numpy(dtype=np.float64)
    A = A - A.mean(axis=0)
    norm = np.sqrt(np.sum(A * A, axis=0))
    const = norm == 0
    for name in X.columns[const]:
        log.warning("constant feature %s excluded from collinearity pruning", name)
    with np.errstate(invalid="ignore", divide="ignore"):
        Z = A / norm
    R = np.clip(Z.T @ Z, -1.0, 1.0)
    np.fill_diagonal(R, 1.0)
    R[const, :] = np.nan
    R[:, const] = np.nan
    return pd.DataFrame(R, index=X.columns, columns=X.columns)


def _mean_abs(R: np.ndarray, active: np.ndarray) -> np.ndarray:
    A = np.abs(R)
    A = np.where(active[None, :] & active[:, None], A, 0.0)
    np.fill_diagonal(A, 0.0)
    k = active.sum() - 1
    return A.sum(axis=1) / k if k > 0 else np.zeros(len(R))


def prune_collinear(corr: pd.DataFrame, threshold: float = 0.90, mode: str = "literal") -> CollinearityReport:
    """Drop one member of every pair with |r| > threshold.

    Pairs are visited in descending |r| (ties by name pair). While both
    members are still kept, the one with the larger mean |r| against all
    other features is dropped, ties going to the lexicographically later
    name. In ``"literal"`` mode the means are computed once from the full
    matrix; ``"recompute"`` refreshes them over the surviving features
    after every drop.
    """
    if mode not in ("literal", "recompute"):
        raise ConfigError(f"unknown pruning mode {mode!r}")
    names = [str(c) for c in corr.columns]
    R = corr.to_numpy(dtype=np.float64)
    const = np.isnan(np.diag(R))
    dropped = [Drop(names[i], "", float("nan"), "constant") for i in np.flatnonzero(const)]
    alive = ~const
    mean = _mean_abs(np.nan_to_num(R), alive)

    pairs = []
    n = len(names)
    for i in range(n):
        for j in range(i + 1, n):
            if alive[i] and alive[j] and abs(R[i, j]) > threshold:
                a, b = sorted((names[i], names[j]))
                pairs.append((-abs(R[i, j]), a, b, i, j))
    pairs.sort()
    for neg_r, _, _, i, j in pairs:
        if not (alive[i] and alive[j]):
            continue
        mi, mj = mean[i], mean[j]
        if mi > mj or (mi == mj and names[i] > names[j]):
            loser, partner = i, j
        else:
            loser, partner = j, i
        alive[loser] = False
        dropped.append(Drop(names[loser], names[partner], -neg_r, "collinear"))
        if mode == "recompute":
            mean = _mean_abs(np.nan_to_num(R), alive)
    kept = [names[i] for i in range(n) if alive[i]]
    return CollinearityReport(corr, kept, dropped, threshold, mode)
