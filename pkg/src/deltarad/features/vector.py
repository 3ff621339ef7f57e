from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, Optional

import numpy as np

from .names import FEATURE_INDEX


@dataclass(frozen=True)
class FeatureVector:
    """Named feature values for one (course, fraction) sample.

    ``degenerate`` names the features whose value came from a fixed
    convention (constant region, single voxel, ...) rather than the formula.
    """

    values: Dict[str, float]
    degenerate: FrozenSet[str] = field(default_factory=frozenset)
    course_id: Optional[str] = None
    fraction: Optional[str] = None
    config_hash: Optional[str] = None

    def __getitem__(self, name: str) -> float:
        return self.values[name]

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def ordered(self) -> "FeatureVector":
        vals = dict(sorted(self.values.items(), key=lambda kv: FEATURE_INDEX.get(kv[0], 10**6)))
        return FeatureVector(vals, self.degenerate, self.course_id, self.fraction, self.config_hash)

    def as_array(self, names: Iterable[str]) -> np.ndarray:
        return np.array([self.values[n] for n in names], dtype=np.float64)

    def tagged(self, course_id=None, fraction=None, config_hash=None) -> "FeatureVector":
        return FeatureVector(
            dict(self.values),
            self.degenerate,
            course_id if course_id is not None else self.course_id,
            fraction if fraction is not None else self.fraction,
            config_hash if config_hash is not None else self.config_hash,
        )

    @staticmethod
    def merge(*parts: "FeatureVector") -> "FeatureVector":
        values, flags = {}, set()
        for p in parts:
            values.update(p.values)
            flags |= p.degenerate
        return FeatureVector(values, frozenset(flags))
