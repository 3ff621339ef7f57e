"""Gray level size zone matrix features (26-connected zones)."""

import numpy as np
from scipy import ndimage

from ..preprocess import DiscretizedVolume
from ._grid import crop_padded, plogp
from .names import GLSZM, qualified
from .vector import FeatureVector

_FULL = np.ones((3, 3, 3), dtype=bool)


def size_zone_matrix(lab: np.ndarray, ng: int) -> np.ndarray:
    """Zone counts indexed by (level - 1, size - 1)."""
    levels, sizes = [], []
    for g in np.unique(lab[lab > 0]):
        comp, n = ndimage.label(lab == g, structure=_FULL)
        zone_sizes = np.bincount(comp.ravel())[1:]
        levels.append(np.full(n, g - 1))
        sizes.append(zone_sizes - 1)
    levels = np.concatenate(levels)
    sizes = np.concatenate(sizes)
    S = np.zeros((ng, int(sizes.max()) + 1), dtype=np.float64)
    np.add.at(S, (levels, sizes), 1.0)
    return S


def glszm_from_matrix(S: np.ndarray, n_voxels: int) -> dict:
    ng, ns = S.shape
    i = np.arange(1, ng + 1, dtype=np.float64)[:, None]
    s = np.arange(1, ns + 1, dtype=np.float64)[None, :]
    nz = S.sum()
    p = S / nz
    pg = S.sum(axis=1)
    ps = S.sum(axis=0)
    mu_i = np.sum(p * i)
    mu_s = np.sum(p * s)
    return {
        "GrayLevelNonUniformity": float(np.sum(pg**2) / nz),
        "GrayLevelNonUniformityNormalized": float(np.sum(pg**2) / nz**2),
        "GrayLevelVariance": float(np.sum(p * (i - mu_i) ** 2)),
        "HighGrayLevelZoneEmphasis": float(np.sum(S * i**2) / nz),
        "LargeAreaEmphasis": float(np.sum(S * s**2) / nz),
        "LargeAreaHighGrayLevelEmphasis": float(np.sum(S * i**2 * s**2) / nz),
        "LargeAreaLowGrayLevelEmphasis": float(np.sum(S * s**2 / i**2) / nz),
        "LowGrayLevelZoneEmphasis": float(np.sum(S / i**2) / nz),
        "SizeZoneNonUniformity": float(np.sum(ps**2) / nz),
        "SizeZoneNonUniformityNormalized": float(np.sum(ps**2) / nz**2),
        "SmallAreaEmphasis": float(np.sum(S / s**2) / nz),
        "SmallAreaHighGrayLevelEmphasis": float(np.sum(S * i**2 / s**2) / nz),
        "SmallAreaLowGrayLevelEmphasis": float(np.sum(S / (i**2 * s**2)) / nz),
        "ZoneEntropy": float(plogp(p)),
        "ZonePercentage": float(nz / n_voxels),
        "ZoneVariance": float(np.sum(p * (s - mu_s) ** 2)),
    }


def glszm_features(disc: DiscretizedVolume) -> FeatureVector:
    lab = crop_padded(disc.labels).astype(np.int64)
    S = size_zone_matrix(lab, disc.bin_count)
    vals = glszm_from_matrix(S, int(np.count_nonzero(lab)))
    return FeatureVector({qualified("glszm", n): vals[n] for n in GLSZM})
