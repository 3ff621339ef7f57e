"""Survival statistics: KM, log-rank, Cox, BH, RFE-lasso, ANCOVA, cutpoints."""

from typing import Mapping, Sequence, Tuple

import numpy as np
import pandas as pd

from .cox import CoxFit, concordance_index, cox_fit, partial_loglik
from .cutpoint import CutpointResult, cutpoint_search, split_groups
from .inference import AncovaResult, ancova, bh_adjust
from .km import KMCurve, LogRankResult, SurvivalData, as_survival, km_estimate, logrank_groups, logrank_test
from .lasso import MultiCoxResult, lambda_grid, lasso_cd, multivariate_cox_with_rfe, rfe_lasso_rank

__all__ = [
    "AncovaResult",
    "CoxFit",
    "CutpointResult",
    "KMCurve",
    "LogRankResult",
    "MultiCoxResult",
    "SurvivalData",
    "ancova",
    "as_survival",
    "bh_adjust",
    "concordance_index",
    "cox_fit",
    "cutpoint_search",
    "km_estimate",
    "lambda_grid",
    "lasso_cd",
    "logrank_groups",
    "logrank_test",
    "multivariate_cox_with_rfe",
    "partial_loglik",
    "rfe_lasso_rank",
    "split_groups",
    "univariate_screen",
]


def univariate_screen(
    X: pd.DataFrame,
    outcomes: Mapping[str, Tuple[np.ndarray, np.ndarray]],
) -> pd.DataFrame:
    """One Cox fit per (feature, endpoint); BH adjustment within each endpoint.

    ``outcomes`` maps endpoint name to ``(time, event)`` aligned with the rows
    of ``X``. Endpoints without events are skipped.
    """
    out = pd.DataFrame({"feature": list(X.columns)})
    for ep, (t, e) in outcomes.items():
        if np.sum(e) == 0:
            continue
        t, e = np.asarray(t, dtype=np.float64), np.asarray(e)
        p = []
        for f in X.columns:
            ok = np.isfinite(X[f].to_numpy(dtype=np.float64))
            p.append(cox_fit(X.loc[ok, [f]], t[ok], e[ok]).p[0] if e[ok].sum() else np.nan)
        p = np.array(p)
        adj = np.full(p.size, np.nan)
        fin = np.isfinite(p)
        adj[fin] = bh_adjust(p[fin])
        out[f"p_{ep}"] = p
        out[f"p_bh_{ep}"] = adj
    return out
