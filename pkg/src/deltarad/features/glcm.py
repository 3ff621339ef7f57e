"""Gray level co-occurrence matrix features.

Symmetric co-occurrences at distance 1 along the 13 unique 3D directions.
Each feature is evaluated on every direction's normalized matrix and the
values are averaged over the directions that contain at least one pair.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import NoValidPairsError
from ..preprocess import DiscretizedVolume
from ._grid import DIRECTIONS, crop_padded, plogp, shifted
from .names import GLCM, qualified
from .vector import FeatureVector


@dataclass(frozen=True)
class TextureMatrix:
    kind: str
    counts: np.ndarray
    meta: dict


def build_glcm(disc: DiscretizedVolume) -> TextureMatrix:
    """Raw symmetric pair counts, shape ``(Ng, Ng, 13)``."""
    ng = int(disc.bin_count)
    lab = crop_padded(disc.labels).astype(np.int64)
    counts = np.zeros((ng, ng, len(DIRECTIONS)), dtype=np.float64)
    for a, d in enumerate(DIRECTIONS):
        nb = shifted(lab, d)
        ok = (lab > 0) & (nb > 0)
        idx = (lab[ok] - 1) * ng + (nb[ok] - 1)
        P = np.bincount(idx, minlength=ng * ng).reshape(ng, ng).astype(np.float64)
        counts[:, :, a] = P + P.T
    return TextureMatrix("GLCM", counts, {"n_gray_levels": ng, "directions": list(DIRECTIONS)})


def glcm_from_counts(P: np.ndarray, ng: int):
    """Feature values and degenerate flags for one direction's count matrix."""
    p = P / P.sum()
    i = np.arange(1, ng + 1, dtype=np.float64)[:, None]
    j = i.T
    flags = set()

    px = p.sum(axis=1)
    py = p.sum(axis=0)
    lv = np.arange(1, ng + 1, dtype=np.float64)
    ux = float(np.sum(lv * px))
    uy = float(np.sum(lv * py))
    sigx = np.sqrt(np.sum((lv - ux) ** 2 * px))
    sigy = np.sqrt(np.sum((lv - uy) ** 2 * py))

    k_sum = (i + j).astype(np.int64).ravel()
    pxy_sum = np.bincount(k_sum, weights=p.ravel(), minlength=2 * ng + 1)[2:]
    ks = np.arange(2, 2 * ng + 1, dtype=np.float64)
    k_diff = np.abs(i - j).astype(np.int64).ravel()
    pxy_diff = np.bincount(k_diff, weights=p.ravel(), minlength=ng)
    kd = np.arange(0, ng, dtype=np.float64)

    hx = float(plogp(px))
    hy = float(plogp(py))
    hxy = float(plogp(p))
    pxpy = px[:, None] * py[None, :]
    logpxpy = np.zeros_like(pxpy)
    np.log2(pxpy, out=logpxpy, where=pxpy > 0)
    hxy1 = float(-np.sum(p * logpxpy))
    hxy2 = float(-np.sum(pxpy * logpxpy))

    diff = i - j
    diff2 = diff**2
    v = {}
    v["Autocorrelation"] = float(np.sum(p * i * j))
    centred = i + j - ux - uy
    v["ClusterProminence"] = float(np.sum(p * centred**4))
    v["ClusterShade"] = float(np.sum(p * centred**3))
    v["ClusterTendency"] = float(np.sum(p * centred**2))
    v["Contrast"] = float(np.sum(p * diff2))
    if sigx * sigy > 0:
        v["Correlation"] = float((np.sum(p * i * j) - ux * uy) / (sigx * sigy))
    else:
        v["Correlation"] = 1.0
        flags.add("Correlation")
    da = float(np.sum(kd * pxy_diff))
    v["DifferenceAverage"] = da
    v["DifferenceEntropy"] = float(plogp(pxy_diff))
    v["DifferenceVariance"] = float(np.sum((kd - da) ** 2 * pxy_diff))
    v["Id"] = float(np.sum(p / (1 + np.abs(diff))))
    v["Idm"] = float(np.sum(p / (1 + diff2)))
    v["Idmn"] = float(np.sum(p / (1 + diff2 / ng**2)))
    v["Idn"] = float(np.sum(p / (1 + np.abs(diff) / ng)))
    hmax = max(hx, hy)
    if hmax > 0:
        v["Imc1"] = (hxy - hxy1) / hmax
    else:
        v["Imc1"] = 0.0
        flags.add("Imc1")
    present = np.count_nonzero(px)
    if present > 1:
        v["Imc2"] = float(np.sqrt(max(0.0, 1.0 - np.exp(-2.0 * (hxy2 - hxy)))))
    else:
        v["Imc2"] = 0.0
        flags.add("Imc2")
    off = diff != 0
    v["InverseVariance"] = float(np.sum(p[off] / diff2[off]))
    v["JointAverage"] = ux
    v["JointEnergy"] = float(np.sum(p * p))
    v["JointEntropy"] = hxy
    if present > 1:
        rows = px > 0
        cols = py > 0
        sub = p[np.ix_(rows, cols)]
        A = sub / np.sqrt(px[rows][:, None] * py[cols][None, :])
        # eigenvalues of Q = sum_k p(i,k)p(j,k)/(px(i)py(k)) are the squared singular values of A
        sv = np.linalg.svd(A, compute_uv=False)
        v["MCC"] = float(sv[1]) if sv.size > 1 else 0.0
    else:
        v["MCC"] = 1.0
        flags.add("MCC")
    v["MaximumProbability"] = float(p.max())
    v["SumAverage"] = float(np.sum(ks * pxy_sum))
    v["SumEntropy"] = float(plogp(pxy_sum))
    v["SumSquares"] = float(np.sum(p * (i - ux) ** 2))
    return v, flags


def glcm_features(disc: DiscretizedVolume) -> FeatureVector:
    mat = build_glcm(disc)
    ng = mat.meta["n_gray_levels"]
    per_dir = []
    flags = set()
    for a in range(mat.counts.shape[2]):
        P = mat.counts[:, :, a]
        if P.sum() == 0:
            continue
        v, f = glcm_from_counts(P, ng)
        per_dir.append(v)
        flags |= f
    if not per_dir:
        raise NoValidPairsError("no neighbouring voxel pairs inside the mask")
    values = {qualified("glcm", n): float(np.mean([v[n] for v in per_dir])) for n in GLCM}
    return FeatureVector(values, frozenset(qualified("glcm", n) for n in flags))
