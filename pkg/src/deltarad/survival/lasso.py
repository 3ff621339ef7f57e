"""Lasso by cyclic coordinate descent and recursive feature elimination."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np
import pandas as pd

from ..errors import ConfigError, ConstantColumnError, TooFewSamplesError
from .cox import CoxFit, cox_fit
from .km import as_survival

N_FOLDS = 5
TIE_RTOL = 1e-9


def standardize(X: np.ndarray, ref: np.ndarray = None):
    """Zero mean, unit population SD using the statistics of ``ref``."""
    ref = X if ref is None else ref
    mu = ref.mean(axis=0)
    sd = ref.std(axis=0)
    return (X - mu) / sd, mu, sd


def lasso_cd(X, y, lam: float, tol: float = 1e-10, max_iter: int = 10000, beta0=None) -> np.ndarray:
    """Minimize ``(1/2n)||y - Xb||^2 + lam * ||b||_1`` over b (no intercept;
    centre y and X beforehand)."""
    n, p = X.shape
    b = np.zeros(p) if beta0 is None else beta0.copy()
    col_sq = np.sum(X * X, axis=0) / n
    r = y - X @ b
    for _ in range(max_iter):
        biggest = 0.0
        for j in range(p):
            if col_sq[j] == 0:
                continue
            old = b[j]
            rho = X[:, j] @ r / n + col_sq[j] * old
            new = np.sign(rho) * max(abs(rho) - lam, 0.0) / col_sq[j]
            if new != old:
                r -= X[:, j] * (new - old)
                b[j] = new
                biggest = max(biggest, abs(new - old))
        if biggest < tol:
            break
    return b


def lambda_grid(X, y, n: int = 20, ratio: float = 1e-3) -> np.ndarray:
    lam_max = np.max(np.abs(X.T @ (y - y.mean()))) / X.shape[0]
    if lam_max == 0:
        return np.full(n, 1e-12)
    return np.geomspace(lam_max, lam_max * ratio, n)


def cv_lambda(X, y, grid) -> float:
    """Grid value with the lowest 5-fold CV squared error (fold = index mod 5);
    ties go to the larger penalty."""
    folds = np.arange(X.shape[0]) % N_FOLDS
    err = np.zeros(len(grid))
    for k in range(N_FOLDS):
        tr, va = folds != k, folds == k
        sd = X[tr].std(axis=0)
        if np.any(sd == 0):
            sd = np.where(sd == 0, 1.0, sd)
        Xtr = (X[tr] - X[tr].mean(axis=0)) / sd
        Xva = (X[va] - X[tr].mean(axis=0)) / sd
        ym = y[tr].mean()
        b = np.zeros(X.shape[1])
        for g, lam in enumerate(grid):
            b = lasso_cd(Xtr, y[tr] - ym, lam, beta0=b)
            err[g] += np.sum((y[va] - ym - Xva @ b) ** 2)
    # near-equal errors (within rounding) count as ties
    best = np.flatnonzero(err <= err.min() * (1 + TIE_RTOL) + 1e-300)
    return float(grid[int(best[0])])


def rfe_lasso_rank(X: pd.DataFrame, y, lam: float = None) -> pd.Series:
    """Rank features by recursive elimination of the smallest |lasso coefficient|.

    The penalty is chosen once on the full feature set by cross-validation
    unless given. Returns integer ranks indexed by feature, 1 = kept longest.
    """
    names = [str(c) for c in X.columns]
    A = X.to_numpy(dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    n, p = A.shape
    if p < 2:
        raise TooFewSamplesError("need at least two features to rank")
    if n < max(p, N_FOLDS):
        raise TooFewSamplesError(f"{n} samples for {p} features")
    sd = A.std(axis=0)
    if np.any(sd == 0):
        raise ConstantColumnError(f"constant columns: {[names[j] for j in np.flatnonzero(sd == 0)]}")
    Z = (A - A.mean(axis=0)) / sd
    yc = y - y.mean()
    if lam is None:
        lam = cv_lambda(A, y, lambda_grid(Z, y))
    y_scale = float(np.std(yc))
    remaining = list(range(p))
    eliminated: List[int] = []
    while len(remaining) > 1:
        b = lasso_cd(Z[:, remaining], yc, lam)
        mag = np.abs(b)
        # magnitudes equal up to rounding are ties, so rescaled inputs rank identically
        low = mag.min() + TIE_RTOL * max(mag.max(), y_scale)
        tied = [remaining[k] for k in np.flatnonzero(mag <= low)]
        out = min(tied, key=lambda j: names[j])
        eliminated.append(out)
        remaining.remove(out)
    order = remaining + eliminated[::-1]
    return pd.Series({names[j]: r for r, j in enumerate(order, start=1)}, dtype=np.int64)[names]


def _num(v: float) -> str:
    # separated fits give astronomically large HRs; keep those readable
    return f"{v:.2f}" if abs(v) < 1e4 else f"{v:.3g}"


@dataclass
class MultiCoxResult:
    fit: CoxFit
    ranking: pd.Series
    selected: List[str]

    def table4(self) -> pd.DataFrame:
        """Per-covariate p, HR (95% CI), importance rank and model concordance."""
        t = self.fit.table()
        return pd.DataFrame(
            {
                "covariate": self.selected,
                "p_value": t["p"].to_numpy(),
                "hr_ci95": [f"{_num(h)} ({_num(lo)} - {_num(hi)})" for h, lo, hi in t[["hr", "ci_low", "ci_high"]].to_numpy()],
                "importance": [int(self.ranking[s]) for s in self.selected],
                "concordance": self.fit.concordance,
            }
        )


def rfe_response(time, event, response: str = "event"):
    """Response vector and row mask for the RFE regression."""
    t, e = as_survival(time, event)
    if response == "event":
        return e.astype(np.float64), np.ones(t.size, bool)
    if response == "time":
        keep = e == 1
        return t[keep], keep
    raise ConfigError(f"unknown RFE response {response!r}")


def multivariate_cox_with_rfe(X: pd.DataFrame, time, event, top_k: int = 4, response: str = "event") -> MultiCoxResult:
    t, e = as_survival(time, event)
    y, rows = rfe_response(t, e, response)
    ranking = rfe_lasso_rank(X.loc[rows] if not rows.all() else X, y)
    selected = list(ranking.sort_values(kind="stable").index[:top_k])
    fit = cox_fit(X[selected], t, e)
    return MultiCoxResult(fit, ranking, selected)
