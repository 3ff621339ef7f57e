"""Maximally selected log-rank cutpoint with a permutation p-value."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..errors import NoEventsError, NoValidCutpointError, TooFewSamplesError
from .km import as_survival


@dataclass(frozen=True)
class CutpointResult:
    cutoff: float
    group_sizes: Tuple[int, int]  # (x <= cutoff, x > cutoff)
    statistic: float
    z: float  # signed: positive when the low group has excess events
    p_value: float
    significant: bool
    n_perm: int


class _Scan:
    """Standardized log-rank statistics for every prefix split of x-sorted samples."""

    def __init__(self, t, e, cut_rows):
        ut = np.unique(t[e == 1])
        self.R = (t[:, None] >= ut[None, :]).astype(np.float64)
        self.D = ((t[:, None] == ut[None, :]) & (e[:, None] == 1)).astype(np.float64)
        N = self.R.sum(axis=0)
        d = self.D.sum(axis=0)
        self.a = d / N
        with np.errstate(invalid="ignore", divide="ignore"):
            self.b = np.where(N > 1, d * (N - d) / (N * N * (N - 1)), 0.0)
        self.Nb = N * self.b
        self.e = e.astype(np.float64)
        self.rows = cut_rows  # prefix length - 1 for each candidate

    def z(self, perms: np.ndarray) -> np.ndarray:
        """Signed statistics, shape ``(len(perms), n_candidates)``."""
        cR = np.cumsum(self.R[perms], axis=1)[:, self.rows, :]
        O = np.cumsum(self.e[perms], axis=1)[:, self.rows]
        E = cR @ self.a
        V = cR @ self.Nb - (cR * cR) @ self.b
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(V > 0, (O - E) / np.sqrt(V), 0.0)


def cutpoint_search(
    x,
    time,
    event,
    min_node: int = 7,
    alpha: float = 0.05,
    n_perm: int = 10000,
    seed: int = 0,
    batch: int = 256,
) -> CutpointResult:
    """Single split of ``x`` maximizing |standardized log-rank statistic|.

    Candidates are midpoints between consecutive distinct x values leaving at
    least ``min_node`` samples per side; ties in the statistic go to the
    smaller cutoff. The p-value compares the observed maximum against maxima
    over ``n_perm`` seeded permutations of the outcomes against x, which
    accounts for the search over cutoffs.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    t, e = as_survival(time, event)
    n = x.size
    if n != t.size:
        raise TooFewSamplesError("x and outcomes differ in length")
    if n < 2 * min_node:
        raise TooFewSamplesError(f"need >= {2 * min_node} samples, got {n}")
    if e.sum() == 0:
        raise NoEventsError("cutpoint search needs at least one event")
    order = np.argsort(x, kind="stable")
    xs, ts, es = x[order], t[order], e[order]
    m = np.arange(min_node, n - min_node + 1)
    m = m[xs[m - 1] < xs[np.minimum(m, n - 1)]]
    if m.size == 0:
        raise NoValidCutpointError("no cutoff leaves min_node samples on both sides")
    cutoffs = (xs[m - 1] + xs[m]) / 2
    scan = _Scan(ts, es, m - 1)

    z_obs = scan.z(np.arange(n)[None, :])[0]
    k = int(np.argmax(np.abs(z_obs)))
    stat = float(abs(z_obs[k]))

    rng = np.random.default_rng(seed)
    exceed = 0
    done = 0
    while done < n_perm:
        b = min(batch, n_perm - done)
        perms = np.argsort(rng.random((b, n)), axis=1)
        zmax = np.max(np.abs(scan.z(perms)), axis=1)
        exceed += int(np.sum(zmax >= stat * (1 - 1e-12)))
        done += b
    p = (1 + exceed) / (1 + n_perm)
    return CutpointResult(
        float(cutoffs[k]), (int(m[k]), int(n - m[k])), stat, float(z_obs[k]), float(p), p < alpha, int(n_perm)
    )


def split_groups(x, cutoff: float) -> np.ndarray:
    """True for the high group (x > cutoff)."""
    return np.asarray(x, dtype=np.float64) > cutoff
