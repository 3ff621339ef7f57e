"""Neighbouring gray tone difference matrix features.

Only voxels with at least one in-mask 26-neighbour contribute.
"""

import numpy as np

from ..preprocess import DiscretizedVolume
from ._grid import NEIGHBORS, crop_padded, shifted
from .names import NGTDM, qualified
from .vector import FeatureVector

COARSENESS_CAP = 1e6


def tone_difference(lab: np.ndarray, ng: int):
    """Return ``(n_i, s_i)``: valid-voxel counts and summed |i - neighbourhood mean|."""
    inside = lab > 0
    nsum = np.zeros(lab.shape, dtype=np.float64)
    ncount = np.zeros(lab.shape, dtype=np.int64)
    for d in NEIGHBORS:
        nb = shifted(lab, d)
        ok = nb > 0
        nsum += np.where(ok, nb, 0)
        ncount += ok
    valid = inside & (ncount > 0)
    levels = lab[valid]
    diff = np.abs(levels - nsum[valid] / ncount[valid])
    n_i = np.bincount(levels - 1, minlength=ng).astype(np.float64)
    s_i = np.bincount(levels - 1, weights=diff, minlength=ng)
    return n_i, s_i


def ngtdm_from_arrays(n_i: np.ndarray, s_i: np.ndarray):
    flags = set()
    nvp = n_i.sum()
    ng = n_i.size
    if nvp == 0:
        return {"Busyness": 0.0, "Coarseness": COARSENESS_CAP, "Complexity": 0.0, "Contrast": 0.0, "Strength": 0.0}, set(NGTDM)
    p = n_i / nvp
    present = p > 0
    lv = np.arange(1, ng + 1, dtype=np.float64)[present]
    pp = p[present]
    ss = s_i[present]
    ngp = int(present.sum())
    ps = pp * ss
    sum_ps = float(ps.sum())
    sum_s = float(ss.sum())
    dl = lv[:, None] - lv[None, :]

    v = {}
    if sum_ps > 0:
        v["Coarseness"] = min(1.0 / sum_ps, COARSENESS_CAP)
    else:
        v["Coarseness"] = COARSENESS_CAP
        flags.add("Coarseness")
    if ngp > 1:
        v["Contrast"] = float(np.sum(pp[:, None] * pp[None, :] * dl**2) / (ngp * (ngp - 1)) * sum_s / nvp)
    else:
        v["Contrast"] = 0.0
        flags.add("Contrast")
    ip = lv * pp
    den = float(np.sum(np.abs(ip[:, None] - ip[None, :])))
    if den > 0:
        v["Busyness"] = sum_ps / den
    else:
        v["Busyness"] = 0.0
        flags.add("Busyness")
    v["Complexity"] = float(np.sum(np.abs(dl) * (ps[:, None] + ps[None, :]) / (pp[:, None] + pp[None, :])) / nvp)
    if sum_s > 0:
        v["Strength"] = float(np.sum((pp[:, None] + pp[None, :]) * dl**2) / sum_s)
    else:
        v["Strength"] = 0.0
        flags.add("Strength")
    return v, flags


def ngtdm_features(disc: DiscretizedVolume) -> FeatureVector:
    lab = crop_padded(disc.labels).astype(np.int64)
    n_i, s_i = tone_difference(lab, disc.bin_count)
    vals, flags = ngtdm_from_arrays(n_i, s_i)
    return FeatureVector(
        {qualified("ngtdm", n): vals[n] for n in NGTDM},
        frozenset(qualified("ngtdm", n) for n in flags),
    )
