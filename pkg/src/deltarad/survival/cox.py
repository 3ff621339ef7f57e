"""Cox proportional hazards regression (Efron ties, Newton-Raphson)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from ..errors import NoComparablePairsError, NoEventsError, SingularError
from .km import as_survival

log = logging.getLogger(__name__)

SEPARATION_BOUND = 50.0


def concordance_index(risk, time, event) -> float:
    """Harrell's C: over pairs with ``t_i < t_j`` and ``e_i = 1``, the share
    where subject i has the higher risk; equal risks count one half."""
    r = np.asarray(risk, dtype=np.float64).ravel()
    t, e = as_survival(time, event)
    num = 0.0
    den = 0
    for s in range(0, t.size, 1024):
        ti, ri, ei = t[s : s + 1024, None], r[s : s + 1024, None], e[s : s + 1024, None]
        comp = (ti < t[None, :]) & (ei == 1)
        den += int(comp.sum())
        num += float(np.sum(comp & (ri > r[None, :])) + 0.5 * np.sum(comp & (ri == r[None, :])))
    if den == 0:
        raise NoComparablePairsError("no comparable pairs")
    return num / den


class _Efron:
    """Partial likelihood pieces precomputed for one dataset."""

    def __init__(self, X, t, e):
        order = np.argsort(-t, kind="stable")
        self.X = X[order]
        self.t = t[order]
        self.e = e[order]
        # risk set of subject k (in descending-time order) ends at the last
        # index with the same time
        ut, first = np.unique(-self.t, return_index=True)
        last = np.append(first[1:], self.t.size) - 1
        grp = np.searchsorted(ut, -self.t)
        self.risk_end = last[grp]
        ev = np.flatnonzero(self.e == 1)
        self.ev = ev
        self.ev_grp = grp[ev]
        # position l of each event within its tied block and block size d
        _, inv, counts = np.unique(self.ev_grp, return_inverse=True, return_counts=True)
        self.d = counts[inv].astype(np.float64)
        rank = np.zeros(ev.size, dtype=np.float64)
        seen = {}
        for k, g in enumerate(inv):
            rank[k] = seen.get(g, 0)
            seen[g] = rank[k] + 1
        self.frac = rank / self.d
        self.ev_inv = inv
        self.n_blocks = counts.size

    def evaluate(self, beta):
        X = self.X
        eta = X @ beta
        eta = eta - eta.max()
        w = np.exp(eta)
        wx = w[:, None] * X
        wxx = wx[:, :, None] * X[:, None, :]
        S0 = np.cumsum(w)[self.risk_end[self.ev]]
        S1 = np.cumsum(wx, axis=0)[self.risk_end[self.ev]]
        S2 = np.cumsum(wxx, axis=0)[self.risk_end[self.ev]]
        # tied-event sums per block, broadcast back to each event
        we = w[self.ev]
        T0 = np.bincount(self.ev_inv, weights=we, minlength=self.n_blocks)[self.ev_inv]
        T1 = np.zeros((self.n_blocks, X.shape[1]))
        np.add.at(T1, self.ev_inv, wx[self.ev])
        T1 = T1[self.ev_inv]
        T2 = np.zeros((self.n_blocks, X.shape[1], X.shape[1]))
        np.add.at(T2, self.ev_inv, wxx[self.ev])
        T2 = T2[self.ev_inv]
        f = self.frac
        A0 = S0 - f * T0
        A1 = S1 - f[:, None] * T1
        A2 = S2 - f[:, None, None] * T2
        loglik = float(np.sum(eta[self.ev]) - np.sum(np.log(A0)))
        M = A1 / A0[:, None]
        score = X[self.ev].sum(axis=0) - M.sum(axis=0)
        info = np.sum(A2 / A0[:, None, None] - M[:, :, None] * M[:, None, :], axis=0)
        return loglik, score, info


@dataclass
class CoxFit:
    names: List[str]
    beta: np.ndarray
    se: np.ndarray
    loglik: float
    loglik_null: float
    concordance: float
    converged: bool
    iterations: int
    n: int
    n_events: int
    separation: bool = False
    notes: list = field(default_factory=list)

    @property
    def z(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(np.isinf(self.se), 0.0, self.beta / self.se)

    @property
    def p(self) -> np.ndarray:
        return 2 * stats.norm.sf(np.abs(self.z))

    @property
    def hr(self) -> np.ndarray:
        return np.exp(self.beta)

    @property
    def ci95(self) -> np.ndarray:
        lo = np.exp(self.beta - 1.96 * self.se)
        hi = np.exp(self.beta + 1.96 * self.se)
        return np.column_stack([lo, hi])

    def table(self) -> pd.DataFrame:
        ci = self.ci95
        return pd.DataFrame(
            {
                "beta": self.beta,
                "se": self.se,
                "z": self.z,
                "p": self.p,
                "hr": self.hr,
                "ci_low": ci[:, 0],
                "ci_high": ci[:, 1],
            },
            index=self.names,
        )


def cox_fit(
    X,
    time,
    event,
    names: Sequence[str] = None,
    max_iter: int = 100,
    tol_step: float = 1e-9,
    tol_loglik: float = 1e-10,
) -> CoxFit:
    """Maximum partial likelihood fit with Efron's tie correction.

    Covariates are centred internally (this does not change beta). A
    constant covariate carries no information: it gets beta 0, infinite SE
    and p = 1. Linearly dependent non-constant covariates raise
    ``SingularError``. If some |beta| passes the separation bound the fit
    stops, is flagged and reported as not converged.
    """
    if isinstance(X, pd.DataFrame):
        names = list(X.columns) if names is None else list(names)
        X = X.to_numpy(dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    t, e = as_survival(time, event)
    n, p = X.shape
    names = list(names) if names is not None else [f"x{j}" for j in range(p)]
    if e.sum() == 0:
        raise NoEventsError("Cox model needs at least one event")
    Xc = X - X.mean(axis=0)
    const = np.all(Xc == 0, axis=0) | (np.ptp(X, axis=0) == 0)
    act = np.flatnonzero(~const)
    notes = [f"constant covariate {names[j]}: beta fixed at 0" for j in np.flatnonzero(const)]
    beta = np.zeros(p)
    se = np.full(p, np.inf)
    model = _Efron(Xc[:, act], t, e)
    null_ll = model.evaluate(np.zeros(act.size))[0] if act.size else _null_loglik(t, e)
    if act.size and np.linalg.matrix_rank(Xc[:, act]) < act.size:
        raise SingularError("design matrix is rank deficient (collinear covariates)")

    b = np.zeros(act.size)
    converged = act.size == 0
    separation = False
    it = 0
    ll = null_ll
    if act.size:
        ll, score, info = model.evaluate(b)
        for it in range(1, max_iter + 1):
            try:
                step = np.linalg.solve(info, score)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(info, score, rcond=None)[0]
            # judge convergence on the Newton step: under separation score and
            # information both vanish while the step stays near 1
            if np.max(np.abs(score)) == 0 or np.max(np.abs(step)) < tol_step:
                converged = True
                it -= 1
                break
            new = b + step
            ll_new, s_new, i_new = model.evaluate(new)
            halvings = 0
            while not ll_new >= ll - 1e-12 and halvings < 30:
                step = step / 2
                new = b + step
                ll_new, s_new, i_new = model.evaluate(new)
                halvings += 1
            delta = ll_new - ll
            b, ll, score, info = new, ll_new, s_new, i_new
            if np.max(np.abs(b)) > SEPARATION_BOUND:
                separation = True
                break
            if np.max(np.abs(step)) < tol_step and abs(delta) < tol_loglik:
                converged = True
                break
        if not separation and np.any(b != 0) and ll > -1e-8:
            # partial likelihood saturated at 0: only reachable as |beta| -> inf
            separation = True
        try:
            cov = np.linalg.inv(info)
            se_act = np.sqrt(np.clip(np.diag(cov), 0, None))
        except np.linalg.LinAlgError:
            se_act = np.full(act.size, np.inf)
        beta[act] = b
        se[act] = se_act
    if separation:
        notes.append("monotone likelihood: |beta| exceeded the separation bound")
        log.warning("Cox fit hit the separation bound; estimates are unreliable")
    try:
        c = concordance_index(X @ beta, t, e)
    except NoComparablePairsError:
        c = float("nan")
    return CoxFit(
        names, beta, se, float(ll), float(null_ll), c, converged and not separation, it, n, int(e.sum()), separation, notes
    )


def _null_loglik(t, e) -> float:
    return _Efron(np.zeros((t.size, 1)), t, e).evaluate(np.zeros(1))[0]


def partial_loglik(beta, X, time, event) -> float:
    """Efron partial log-likelihood at ``beta`` (for checks and profiling)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    t, e = as_survival(time, event)
    return _Efron(X, t, e).evaluate(np.atleast_1d(np.asarray(beta, dtype=np.float64)))[0]
