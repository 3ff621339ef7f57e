"""Gray level run length matrix features, averaged over the 13 directions."""

import numpy as np

from ..preprocess import DiscretizedVolume
from ._grid import DIRECTIONS, crop_padded, plogp, shifted
from .names import GLRLM, qualified
from .vector import FeatureVector


def run_length_matrix(lab: np.ndarray, direction, ng: int) -> np.ndarray:
    """Runs of equal labels along ``direction`` on a zero-padded label array.

    Returns counts of shape ``(ng, max_run)`` indexed by (level - 1, length - 1).
    """
    inside = lab > 0
    prev = shifted(lab, tuple(-c for c in direction))
    cont = inside & (prev == lab)
    length = inside.astype(np.int64)
    # propagate run lengths one step per sweep along the direction
    for _ in range(max(lab.shape)):
        nxt = np.where(cont, shifted(length, tuple(-c for c in direction)) + 1, length)
        if np.array_equal(nxt, length):
            break
        length = nxt
    cont_next = shifted(cont, direction)
    ends = inside & ~cont_next
    levels = lab[ends] - 1
    lens = length[ends] - 1
    max_run = int(lens.max()) + 1
    R = np.zeros((ng, max_run), dtype=np.float64)
    np.add.at(R, (levels, lens), 1.0)
    return R


def glrlm_from_matrix(R: np.ndarray, n_voxels: int) -> dict:
    ng, nl = R.shape
    i = np.arange(1, ng + 1, dtype=np.float64)[:, None]
    l = np.arange(1, nl + 1, dtype=np.float64)[None, :]
    nr = R.sum()
    p = R / nr
    pg = R.sum(axis=1)
    pr = R.sum(axis=0)
    mu_i = np.sum(p * i)
    mu_l = np.sum(p * l)
    return {
        "GrayLevelNonUniformity": float(np.sum(pg**2) / nr),
        "GrayLevelNonUniformityNormalized": float(np.sum(pg**2) / nr**2),
        "GrayLevelVariance": float(np.sum(p * (i - mu_i) ** 2)),
        "HighGrayLevelRunEmphasis": float(np.sum(R * i**2) / nr),
        "LongRunEmphasis": float(np.sum(R * l**2) / nr),
        "LongRunHighGrayLevelEmphasis": float(np.sum(R * i**2 * l**2) / nr),
        "LongRunLowGrayLevelEmphasis": float(np.sum(R * l**2 / i**2) / nr),
        "LowGrayLevelRunEmphasis": float(np.sum(R / i**2) / nr),
        "RunEntropy": float(plogp(p)),
        "RunLengthNonUniformity": float(np.sum(pr**2) / nr),
        "RunLengthNonUniformityNormalized": float(np.sum(pr**2) / nr**2),
        "RunPercentage": float(nr / n_voxels),
        "RunVariance": float(np.sum(p * (l - mu_l) ** 2)),
        "ShortRunEmphasis": float(np.sum(R / l**2) / nr),
        "ShortRunHighGrayLevelEmphasis": float(np.sum(R * i**2 / l**2) / nr),
        "ShortRunLowGrayLevelEmphasis": float(np.sum(R / (i**2 * l**2)) / nr),
    }


def glrlm_features(disc: DiscretizedVolume) -> FeatureVector:
    lab = crop_padded(disc.labels).astype(np.int64)
    n_vox = int(np.count_nonzero(lab))
    per_dir = [glrlm_from_matrix(run_length_matrix(lab, d, disc.bin_count), n_vox) for d in DIRECTIONS]
    values = {qualified("glrlm", n): float(np.mean([v[n] for v in per_dir])) for n in GLRLM}
    return FeatureVector(values)
