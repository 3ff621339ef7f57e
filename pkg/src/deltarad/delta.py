"""Per-fraction relative change, F5/F1 ratios and cohort trend tables.

Cohort feature data arrive as a mapping ``fraction -> DataFrame`` (rows are
course ids, columns are features). Relative changes are taken against F1;
a zero F1 value removes that (course, feature) from every summary.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np
import pandas as pd

from .cohort import DELTA_FRACTIONS
from .errors import EmptyCohortError, ZeroBaselineError
from .tables import write_csv

log = logging.getLogger(__name__)

LATER = DELTA_FRACTIONS[1:]  # F2..F5


def relative_change(f_k: float, f_1: float) -> float:
    if f_1 == 0:
        raise ZeroBaselineError("relative change undefined for a zero F1 value")
    return (f_k - f_1) / f_1


def delta_slope(f_5: float, f_1: float) -> float:
    if f_1 == 0:
        raise ZeroBaselineError("ratio undefined for a zero F1 value")
    return f_5 / f_1


def direction_profile(changes: Sequence[float]) -> str:
    c = np.asarray(changes, dtype=np.float64)
    if np.any(c == 0):
        return "has_zero"
    if np.all(c > 0):
        return "all_positive"
    if np.all(c < 0):
        return "all_negative"
    return "mixed"


@dataclass(frozen=True)
class DeltaSeries:
    course_id: str
    feature_name: str
    rel_change: Dict[str, float]
    ratio_f5_f1: float

    @property
    def direction_profile(self) -> str:
        return direction_profile([self.rel_change[f] for f in LATER])


@dataclass
class DeltaSet:
    """Relative changes per later fraction plus F5/F1 ratios.

    Every frame is indexed by course id with one column per feature; NaN
    marks a zero-baseline exclusion.
    """

    rel: Dict[str, pd.DataFrame]
    ratio: pd.DataFrame
    excluded: List[Tuple[str, str]] = field(default_factory=list)

    @property
    def features(self) -> list:
        return list(self.ratio.columns)

    def series(self, course_id: str, feature: str) -> DeltaSeries:
        return DeltaSeries(
            course_id,
            feature,
            {f: float(self.rel[f].at[course_id, feature]) for f in LATER},
            float(self.ratio.at[course_id, feature]),
        )

    def long_frame(self) -> pd.DataFrame:
        rows = []
        for feat in self.features:
            for cid in self.ratio.index:
                for frac in LATER:
                    v = self.rel[frac].at[cid, feat]
                    if not np.isnan(v):
                        rows.append((cid, feat, frac, float(v)))
        return pd.DataFrame(rows, columns=["course_id", "feature", "fraction", "rel_change"])


def compute_deltas(matrices: Mapping[str, pd.DataFrame], features: Sequence[str] = None) -> DeltaSet:
    """Relative changes F2..F5 vs F1 for courses that have all five fractions."""
    missing = [f for f in DELTA_FRACTIONS if f not in matrices]
    if missing:
        raise EmptyCohortError(f"no feature data for fractions {missing}")
    base = matrices["F1"]
    features = list(features) if features is not None else list(base.columns)
    courses = [c for c in base.index if all(c in matrices[f].index for f in LATER)]
    dropped = [c for c in base.index if c not in courses]
    if dropped:
        log.warning("courses without F1..F5 skipped in delta analysis: %s", dropped)
    if not courses:
        raise EmptyCohortError("no course has complete F1..F5 data")
    f1 = base.loc[courses, features].to_numpy(dtype=np.float64)
    zero = f1 == 0
    excluded = [(courses[i], features[j]) for i, j in zip(*np.nonzero(zero))]
    for cid, feat in excluded:
        log.warning("zero F1 baseline for %s / %s; excluded from delta summaries", cid, feat)
    safe = np.where(zero, np.nan, f1)
    rel = {}
    for frac in LATER:
        fk = matrices[frac].loc[courses, features].to_numpy(dtype=np.float64)
        rel[frac] = pd.DataFrame((fk - safe) / safe, index=courses, columns=features)
    f5 = matrices["F5"].loc[courses, features].to_numpy(dtype=np.float64)
    ratio = pd.DataFrame(f5 / safe, index=courses, columns=features)
    return DeltaSet(rel, ratio, excluded)


def _pct(count: int, total: int) -> float:
    return round(100.0 * count / total, 2) if total else float("nan")


def fmt_iqr(med: float, q1: float, q3: float) -> str:
    return f"{med:.2f} ({q1:.2f}, {q3:.2f})"


@dataclass
class TrendTables:
    abs_change: pd.DataFrame  # numeric median/q1/q3 of |rel change| x 100
    abs_change_text: pd.DataFrame  # "median (q1, q3)" strings
    direction: pd.DataFrame  # % positive / negative / no change, F5 vs F1
    consistency: pd.DataFrame  # % all positive / all negative F2..F5, with median row
    signed_median: pd.DataFrame  # median signed rel change x 100

    def write(self, outdir, prefix: str = "trend"):
        from pathlib import Path

        out = Path(outdir)
        write_csv(_with_feature(self.abs_change_text), out / f"{prefix}_abs_change.csv")
        write_csv(_with_feature(self.direction), out / f"{prefix}_direction.csv")
        write_csv(_with_feature(self.consistency), out / f"{prefix}_consistency.csv")
        write_csv(_with_feature(self.signed_median), out / f"{prefix}_signed_median.csv")


def _with_feature(df: pd.DataFrame) -> pd.DataFrame:
    out = df.copy()
    out.insert(0, "feature", out.index)
    return out.reset_index(drop=True)


def _order(df: pd.DataFrame, key: pd.Series) -> pd.DataFrame:
    # descending by key; ties keep the input feature order
    pos = {n: i for i, n in enumerate(df.index)}
    order = sorted(df.index, key=lambda n: (-key[n], pos[n]))
    return df.loc[order]


def trend_summary(deltas: DeltaSet) -> TrendTables:
    feats = deltas.features
    if len(deltas.ratio) == 0 or not feats:
        raise EmptyCohortError("no courses in delta set")

    num = {}
    txt = {}
    signed = {}
    for frac in LATER:
        rel = deltas.rel[frac]
        for feat in feats:
            v = rel[feat].dropna().to_numpy()
            if v.size == 0:
                num[(feat, frac)] = (np.nan, np.nan, np.nan)
                signed[(feat, frac)] = np.nan
                continue
            a = np.abs(v) * 100.0
            q = np.quantile(a, [0.5, 0.25, 0.75])
            num[(feat, frac)] = tuple(float(x) for x in q)
            signed[(feat, frac)] = float(np.quantile(v * 100.0, 0.5))
    abs_num = pd.DataFrame(
        {
            f"{frac}_{stat}": [num[(feat, frac)][k] for feat in feats]
            for frac in LATER
            for k, stat in enumerate(("median", "q1", "q3"))
        },
        index=feats,
    )
    abs_txt = pd.DataFrame(
        {f"{frac} (%)": [fmt_iqr(*num[(feat, frac)]) for feat in feats] for frac in LATER},
        index=feats,
    )
    key = abs_num["F5_median"].fillna(-np.inf)
    abs_num = _order(abs_num, key)
    abs_txt = abs_txt.loc[abs_num.index]

    sm = pd.DataFrame({f"{frac} (%)": [round(signed[(feat, frac)], 2) for feat in feats] for frac in LATER}, index=feats)
    sm = _order(sm, pd.Series([signed[(f, "F5")] for f in feats], index=feats).fillna(-np.inf))

    rel5 = deltas.rel["F5"]
    dir_rows = {}
    for feat in feats:
        v = rel5[feat].dropna().to_numpy()
        n = v.size
        dir_rows[feat] = (_pct(int(np.sum(v > 0)), n), _pct(int(np.sum(v < 0)), n), _pct(int(np.sum(v == 0)), n))
    direction = pd.DataFrame.from_dict(
        dir_rows, orient="index", columns=["Positive (%)", "Negative (%)", "No Change (%)"]
    )
    direction = _order(direction, direction["Positive (%)"].fillna(-np.inf))

    cons_rows = {}
    for feat in feats:
        M = np.column_stack([deltas.rel[f][feat].to_numpy() for f in LATER])
        M = M[~np.isnan(M).any(axis=1)]
        n = len(M)
        pos = int(np.sum((M > 0).all(axis=1)))
        neg = int(np.sum((M < 0).all(axis=1)))
        cons_rows[feat] = (_pct(pos, n), _pct(neg, n), _pct(pos + neg, n), _pct(n - pos - neg, n))
    cons = pd.DataFrame.from_dict(
        cons_rows,
        orient="index",
        columns=["All Positive (%)", "All Negative (%)", "Total Consistent (%)", "Other (%)"],
    )
    cons = _order(cons, cons["Total Consistent (%)"].fillna(-np.inf))
    cons = with_median_row(cons)
    return TrendTables(abs_num, abs_txt, direction, cons, sm)


def with_median_row(table: pd.DataFrame, label: str = "Median") -> pd.DataFrame:
    """Append a row holding each column's median over the feature rows."""
    med = pd.DataFrame([table.median(axis=0).round(2)], index=[label])
    return pd.concat([table, med])
