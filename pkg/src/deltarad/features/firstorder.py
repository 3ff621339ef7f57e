"""First-order intensity statistics over the ROI."""

import numpy as np

from ..errors import EmptyMaskError
from ..preprocess import DiscretizedVolume
from ..volume import MaskROI, VolumeGrid, check_same_grid
from ._grid import plogp
from .names import qualified
from .vector import FeatureVector


def percentile(x: np.ndarray, q: float) -> float:
    # linear interpolation at rank position q * (N - 1)
    return float(np.quantile(x, q, method="linear"))


def first_order_values(x: np.ndarray, hist_labels: np.ndarray, bin_count: int, voxel_volume: float):
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if n == 0:
        raise EmptyMaskError("no voxels in ROI")
    flags = set()
    mean = x.mean()
    dev = x - mean
    m2 = np.mean(dev**2)
    m3 = np.mean(dev**3)
    m4 = np.mean(dev**4)
    if m2 > 0:
        skew = m3 / m2**1.5
        kurt = m4 / m2**2
    else:
        skew = kurt = 0.0
        flags |= {"Skewness", "Kurtosis"}

    p10, p25, p75, p90 = (percentile(x, q) for q in (0.10, 0.25, 0.75, 0.90))
    robust = x[(x >= p10) & (x <= p90)]
    if robust.size:
        rmad = float(np.mean(np.abs(robust - robust.mean())))
    else:
        # two-voxel ROIs can leave nothing between the 10th and 90th percentiles
        rmad = 0.0
        flags.add("RobustMeanAbsoluteDeviation")
    energy = float(np.sum(x * x))

    counts = np.bincount(hist_labels, minlength=bin_count + 1)[1:]
    p = counts / counts.sum()

    vals = {
        "10Percentile": p10,
        "90Percentile": p90,
        "Energy": energy,
        "Entropy": float(plogp(p)),
        "InterquartileRange": p75 - p25,
        "Kurtosis": float(kurt),
        "Maximum": float(x.max()),
        "MeanAbsoluteDeviation": float(np.mean(np.abs(dev))),
        "Mean": float(mean),
        "Median": percentile(x, 0.5),
        "Minimum": float(x.min()),
        "Range": float(x.max() - x.min()),
        "RobustMeanAbsoluteDeviation": rmad,
        "RootMeanSquared": float(np.sqrt(energy / n)),
        "Skewness": float(skew),
        "TotalEnergy": energy * voxel_volume,
        "Uniformity": float(np.sum(p * p)),
        "Variance": float(m2),
    }
    return vals, flags


def extract_first_order(volume: VolumeGrid, mask: MaskROI, disc: DiscretizedVolume) -> FeatureVector:
    check_same_grid(volume, mask)
    mask.require_nonempty()
    sel = mask.voxels
    vals, flags = first_order_values(volume.data[sel], disc.labels[sel], disc.bin_count, volume.voxel_volume)
    return FeatureVector(
        {qualified("firstorder", k): v for k, v in vals.items()},
        frozenset(qualified("firstorder", k) for k in flags),
    )
