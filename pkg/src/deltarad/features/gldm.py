"""Gray level dependence matrix features (alpha = 0, 26-neighbourhood)."""

import numpy as np

from ..preprocess import DiscretizedVolume
from ._grid import NEIGHBORS, crop_padded, plogp, shifted
from .names import GLDM, qualified
from .vector import FeatureVector


def dependence_matrix(lab: np.ndarray, ng: int, alpha: int = 0) -> np.ndarray:
    """Counts indexed by (level - 1, dependence - 1); dependence ranges 1..27."""
    inside = lab > 0
    dep = np.ones(lab.shape, dtype=np.int64)
    for d in NEIGHBORS:
        nb = shifted(lab, d)
        dep += (nb > 0) & (np.abs(nb - lab) <= alpha)
    D = np.zeros((ng, len(NEIGHBORS) + 1), dtype=np.float64)
    np.add.at(D, (lab[inside] - 1, dep[inside] - 1), 1.0)
    return D


def gldm_from_matrix(D: np.ndarray) -> dict:
    ng, nd = D.shape
    i = np.arange(1, ng + 1, dtype=np.float64)[:, None]
    j = np.arange(1, nd + 1, dtype=np.float64)[None, :]
    nz = D.sum()
    p = D / nz
    pg = D.sum(axis=1)
    pd = D.sum(axis=0)
    mu_i = np.sum(p * i)
    mu_j = np.sum(p * j)
    return {
        "DependenceEntropy": float(plogp(p)),
        "DependenceNonUniformity": float(np.sum(pd**2) / nz),
        "DependenceNonUniformityNormalized": float(np.sum(pd**2) / nz**2),
        "DependenceVariance": float(np.sum(p * (j - mu_j) ** 2)),
        "GrayLevelNonUniformity": float(np.sum(pg**2) / nz),
        "GrayLevelVariance": float(np.sum(p * (i - mu_i) ** 2)),
        "HighGrayLevelEmphasis": float(np.sum(D * i**2) / nz),
        "LargeDependenceEmphasis": float(np.sum(D * j**2) / nz),
        "LargeDependenceHighGrayLevelEmphasis": float(np.sum(D * i**2 * j**2) / nz),
        "LargeDependenceLowGrayLevelEmphasis": float(np.sum(D * j**2 / i**2) / nz),
        "LowGrayLevelEmphasis": float(np.sum(D / i**2) / nz),
        "SmallDependenceEmphasis": float(np.sum(D / j**2) / nz),
        "SmallDependenceHighGrayLevelEmphasis": float(np.sum(D * i**2 / j**2) / nz),
        "SmallDependenceLowGrayLevelEmphasis": float(np.sum(D / (i**2 * j**2)) / nz),
    }


def gldm_features(disc: DiscretizedVolume, alpha: int = 0) -> FeatureVector:
    lab = crop_padded(disc.labels).astype(np.int64)
    vals = gldm_from_matrix(dependence_matrix(lab, disc.bin_count, alpha))
    return FeatureVector({qualified("gldm", n): vals[n] for n in GLDM})
