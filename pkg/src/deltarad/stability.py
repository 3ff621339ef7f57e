"""Feature stability: temporal and spatial concordance and the stable/unstable gate.

Feature matrices are ``pandas.DataFrame`` objects indexed by course id with
one column per feature.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import ndimage

from .errors import (
    BothConstantError,
    ConfigError,
    LengthMismatchError,
    MisalignedRowsError,
    NameMismatchError,
    TooFewCoursesError,
)
from .features.names import FEATURE_INDEX
from .tables import write_csv
from .volume import MaskROI

_RANK = {6: 1, 18: 2, 26: 3}


@dataclass(frozen=True)
class PerturbationSpec:
    seed: int = 0
    repetitions: int = 5
    op_choices: Tuple[str, ...] = ("erode", "dilate")
    connectivity_choices: Tuple[int, ...] = (6, 18, 26)
    radius: int = 1

    def __post_init__(self):
        object.__setattr__(self, "op_choices", tuple(self.op_choices))
        object.__setattr__(self, "connectivity_choices", tuple(int(c) for c in self.connectivity_choices))
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if not self.op_choices or set(self.op_choices) - {"erode", "dilate"}:
            raise ConfigError(f"op_choices must be a nonempty subset of erode/dilate, got {self.op_choices}")
        if not self.connectivity_choices or set(self.connectivity_choices) - set(_RANK):
            raise ConfigError(f"connectivity_choices must be a nonempty subset of 6/18/26, got {self.connectivity_choices}")
        if self.radius < 1:
            raise ConfigError("radius must be >= 1")

    def to_dict(self) -> dict:
        return {
            "seed": int(self.seed),
            "repetitions": self.repetitions,
            "op_choices": list(self.op_choices),
            "connectivity_choices": list(self.connectivity_choices),
            "radius": self.radius,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "PerturbationSpec":
        return cls(**{k: d[k] for k in ("seed", "repetitions", "op_choices", "connectivity_choices", "radius") if k in d})


@dataclass(frozen=True)
class PerturbationDraw:
    op: str
    connectivity: int
    fell_back: bool = False


def _key_int(key: str) -> int:
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little")


def draw_perturbation(spec: PerturbationSpec, rep_index: int, key: str = "") -> PerturbationDraw:
    """Seeded (op, connectivity) choice for one (course, repetition).

    Each draw has its own generator keyed by (seed, course key, repetition),
    so adding or reordering courses never changes existing draws.
    """
    ss = np.random.SeedSequence([int(spec.seed) & (2**64 - 1), _key_int(key), int(rep_index)])
    rng = np.random.default_rng(ss)
    op = spec.op_choices[int(rng.integers(len(spec.op_choices)))]
    conn = spec.connectivity_choices[int(rng.integers(len(spec.connectivity_choices)))]
    return PerturbationDraw(op, conn)


def morph(voxels: np.ndarray, op: str, connectivity: int, radius: int = 1) -> np.ndarray:
    st = ndimage.generate_binary_structure(3, _RANK[connectivity])
    if op == "erode":
        return ndimage.binary_erosion(voxels, st, iterations=radius, border_value=0)
    if op == "dilate":
        return ndimage.binary_dilation(voxels, st, iterations=radius)
    raise ConfigError(f"unknown morphological op {op!r}")


def apply_perturbation(m: MaskROI, spec: PerturbationSpec, rep_index: int, key: str = ""):
    """Perturb ``m`` and return ``(mask, draw)``; ``draw.fell_back`` marks an
    erosion that would have emptied the mask and was replaced by dilation."""
    m.require_nonempty()
    draw = draw_perturbation(spec, rep_index, key)
    out = morph(m.voxels, draw.op, draw.connectivity, spec.radius)
    if not out.any():
        out = morph(m.voxels, "dilate", draw.connectivity, spec.radius)
        draw = PerturbationDraw("dilate", draw.connectivity, True)
    return m.with_voxels(out), draw


def perturb_mask(m: MaskROI, spec: PerturbationSpec, rep_index: int, key: str = "") -> MaskROI:
    return apply_perturbation(m, spec, rep_index, key)[0]


def lin_ccc(x, y) -> float:
    """Lin's concordance correlation coefficient with population moments."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise LengthMismatchError(f"lengths differ: {x.size} vs {y.size}")
    if x.size < 2:
        raise LengthMismatchError("need at least two paired values")
    mx, my = x.mean(), y.mean()
    vx = np.mean((x - mx) ** 2)
    vy = np.mean((y - my) ** 2)
    den = vx + vy + (mx - my) ** 2
    if vx == 0 and vy == 0:
        if np.array_equal(x, y):
            return 1.0
        raise BothConstantError("both vectors constant with different values")
    sxy = np.mean((x - mx) * (y - my))
    return float(np.clip(2 * sxy / den, -1.0, 1.0))


def _check_pair(a: pd.DataFrame, b: pd.DataFrame) -> pd.DataFrame:
    if a.index.has_duplicates or b.index.has_duplicates:
        raise MisalignedRowsError("duplicate course ids in feature matrix")
    if set(a.index) != set(b.index):
        raise MisalignedRowsError(
            f"course ids differ: {sorted(set(a.index) ^ set(b.index))}"
        )
    if list(a.columns) != list(b.columns):
        if set(a.columns) != set(b.columns):
            raise NameMismatchError("feature columns differ")
    if len(a) < 2:
        raise TooFewCoursesError(f"need >= 2 courses, got {len(a)}")
    return b.loc[a.index, a.columns]


def _ccc_columns(a: pd.DataFrame, b: pd.DataFrame) -> pd.Series:
    out = {}
    for name in a.columns:
        try:
            out[name] = lin_ccc(a[name].to_numpy(), b[name].to_numpy())
        except BothConstantError:
            # undefined agreement; NaN never passes the gate
            out[name] = float("nan")
    return pd.Series(out, dtype=np.float64)


def temporal_stability(sim: pd.DataFrame, f1: pd.DataFrame) -> pd.Series:
    """Per-feature CCC between SIM (x) and F1 (y) across courses."""
    f1 = _check_pair(sim, f1)
    return _ccc_columns(sim, f1)


def spatial_stability(f1: pd.DataFrame, perturbed: Sequence[pd.DataFrame]) -> pd.DataFrame:
    """CCC of unperturbed F1 against each perturbation repetition.

    Returns a frame indexed by feature with one column per repetition.
    """
    cols = {}
    for r, pf in enumerate(perturbed, start=1):
        pf = _check_pair(f1, pf)
        cols[f"spatial_ccc_{r}"] = _ccc_columns(f1, pf)
    return pd.DataFrame(cols)


def table_order(names) -> list:
    """Known features in canonical class order, then any others alphabetically."""
    return sorted(names, key=lambda n: (FEATURE_INDEX.get(n, len(FEATURE_INDEX)), n))


@dataclass
class StabilityReport:
    table: pd.DataFrame
    threshold: float = 0.90
    rule: str = "all"
    notes: list = field(default_factory=list)

    @property
    def stable_features(self) -> list:
        return [n for n in self.table.index if self.table.at[n, "stable"] == 1]

    def spatial_columns(self) -> list:
        return [c for c in self.table.columns if c.startswith("spatial_ccc_")]

    def to_frame(self) -> pd.DataFrame:
        return self.table.reset_index().rename(columns={"index": "feature"})

    def to_csv(self, path):
        write_csv(self.to_frame(), path)


def stability_gate(
    temporal,
    spatial,
    threshold: float = 0.90,
    rule: str = "all",
) -> StabilityReport:
    """Stable iff temporal CCC > threshold and the spatial CCCs pass.

    ``rule="all"`` requires every repetition above threshold; ``"median"``
    requires only the median repetition to be. Comparisons are strict.
    """
    temporal = pd.Series(temporal, dtype=np.float64)
    if isinstance(spatial, pd.DataFrame):
        sp = spatial.astype(np.float64)
    else:
        sp = pd.DataFrame({k: list(v) for k, v in spatial.items()}).T.astype(np.float64)
        sp.columns = [f"spatial_ccc_{r + 1}" for r in range(sp.shape[1])]
    if set(temporal.index) != set(sp.index):
        raise NameMismatchError(f"feature sets differ: {sorted(set(temporal.index) ^ set(sp.index))}")
    if rule not in ("all", "median"):
        raise ConfigError(f"unknown stability rule {rule!r}")
    order = table_order(temporal.index)
    temporal = temporal.loc[order]
    sp = sp.loc[order]
    with np.errstate(invalid="ignore"):
        t_ok = temporal.to_numpy() > threshold
        if rule == "all":
            s_ok = (sp.to_numpy() > threshold).all(axis=1)
        else:
            s_ok = np.median(sp.to_numpy(), axis=1) > threshold
    table = pd.DataFrame({"temporal_ccc": temporal.to_numpy()}, index=order)
    for c in sp.columns:
        table[c] = sp[c].to_numpy()
    table["stable"] = (t_ok & s_ok).astype(int)
    return StabilityReport(table, threshold, rule)


def read_stability_csv(path, threshold: float = 0.90, rule: str = "all") -> StabilityReport:
    df = pd.read_csv(path).set_index("feature")
    df.index.name = None
    return StabilityReport(df, threshold, rule)


def stability_from_matrices(
    sim: pd.DataFrame,
    f1: pd.DataFrame,
    perturbed: Sequence[pd.DataFrame],
    threshold: float = 0.90,
    rule: str = "all",
    notes: Optional[list] = None,
) -> StabilityReport:
    rep = stability_gate(temporal_stability(sim, f1), spatial_stability(f1, perturbed), threshold, rule)
    rep.notes = list(notes or [])
    return rep
