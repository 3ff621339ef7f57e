"""Survival data container, Kaplan-Meier estimator and the two-group log-rank test."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats

from ..errors import EmptySampleError, NegativeTimeError, NoEventsError, NonBinaryEventError, LengthMismatchError


def as_survival(time, event):
    """Validate and return ``(time, event)`` as float and int arrays."""
    t = np.asarray(time, dtype=np.float64).ravel()
    e = np.asarray(event).ravel()
    if t.size != e.size:
        raise LengthMismatchError(f"time has {t.size} entries, event has {e.size}")
    if not np.all(np.isfinite(t)):
        raise NegativeTimeError("survival times must be finite")
    if np.any(t < 0):
        raise NegativeTimeError("survival times must be >= 0")
    if not np.all(np.isin(e, (0, 1))):
        raise NonBinaryEventError("event indicators must be 0 or 1")
    return t, e.astype(np.int64)


@dataclass(frozen=True)
class SurvivalData:
    time: np.ndarray
    event: np.ndarray

    def __post_init__(self):
        t, e = as_survival(self.time, self.event)
        object.__setattr__(self, "time", t)
        object.__setattr__(self, "event", e)

    def __len__(self):
        return self.time.size

    @property
    def n_events(self) -> int:
        return int(self.event.sum())

    def subset(self, sel) -> "SurvivalData":
        return SurvivalData(self.time[sel], self.event[sel])


@dataclass(frozen=True)
class KMCurve:
    """Right-continuous step function. ``time[0]`` is 0 with survival 1;
    every later entry is an event time with the survival just after it."""

    time: np.ndarray
    survival: np.ndarray
    at_risk: np.ndarray
    events: np.ndarray

    def at(self, t) -> np.ndarray:
        idx = np.searchsorted(self.time, np.asarray(t, dtype=np.float64), side="right") - 1
        return self.survival[np.clip(idx, 0, None)]

    def median(self) -> float:
        below = np.flatnonzero(self.survival <= 0.5)
        return float(self.time[below[0]]) if below.size else float("inf")

    def to_frame(self, group: str = "all") -> pd.DataFrame:
        return pd.DataFrame(
            {
                "time": self.time,
                "survival": self.survival,
                "at_risk": self.at_risk,
                "group": group,
            }
        )


def km_estimate(time, event) -> KMCurve:
    t, e = as_survival(time, event)
    if t.size == 0:
        raise EmptySampleError("no samples")
    ut = np.unique(t[e == 1])
    at_risk = np.array([np.sum(t >= u) for u in ut], dtype=np.int64)
    d = np.array([np.sum((t == u) & (e == 1)) for u in ut], dtype=np.int64)
    s = np.cumprod((at_risk - d) / at_risk)
    return KMCurve(
        np.concatenate([[0.0], ut]),
        np.concatenate([[1.0], s]),
        np.concatenate([[t.size], at_risk]),
        np.concatenate([[0], d]),
    )


@dataclass(frozen=True)
class LogRankResult:
    chi2: float
    p_value: float
    observed_a: float
    expected_a: float
    variance: float

    @property
    def z(self) -> float:
        """Signed standardized statistic (O - E) / sqrt(V) for group a."""
        return (self.observed_a - self.expected_a) / np.sqrt(self.variance) if self.variance > 0 else 0.0


def logrank_test(time_a, event_a, time_b, event_b) -> LogRankResult:
    ta, ea = as_survival(time_a, event_a)
    tb, eb = as_survival(time_b, event_b)
    t = np.concatenate([ta, tb])
    e = np.concatenate([ea, eb])
    in_a = np.concatenate([np.ones(ta.size, bool), np.zeros(tb.size, bool)])
    return logrank_groups(t, e, in_a)


def logrank_groups(time, event, in_a) -> LogRankResult:
    t, e = as_survival(time, event)
    in_a = np.asarray(in_a, dtype=bool)
    if e.sum() == 0:
        raise NoEventsError("log-rank test needs at least one event")
    ut = np.unique(t[e == 1])
    # risk sets and event counts at each distinct event time
    R = t[None, :] >= ut[:, None]
    D = (t[None, :] == ut[:, None]) & (e[None, :] == 1)
    n = R.sum(axis=1).astype(np.float64)
    d = D.sum(axis=1).astype(np.float64)
    na = R[:, in_a].sum(axis=1).astype(np.float64)
    oa = float(D[:, in_a].sum())
    ea = float(np.sum(d * na / n))
    with np.errstate(invalid="ignore", divide="ignore"):
        v = np.where(n > 1, d * (na / n) * (1 - na / n) * (n - d) / (n - 1), 0.0)
    var = float(v.sum())
    chi2 = (oa - ea) ** 2 / var if var > 0 else 0.0
    return LogRankResult(chi2, float(stats.chi2.sf(chi2, 1)), oa, ea, var)
