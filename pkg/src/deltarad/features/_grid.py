"""Neighbourhood helpers shared by the texture matrices."""

import itertools

import numpy as np

from ..errors import EmptyMaskError

# the 26 neighbour offsets and the 13 unique directions (first nonzero component positive)
NEIGHBORS = [d for d in itertools.product((-1, 0, 1), repeat=3) if d != (0, 0, 0)]
DIRECTIONS = [d for d in NEIGHBORS if next(c for c in d if c != 0) > 0]

assert len(DIRECTIONS) == 13


def crop_padded(labels: np.ndarray, pad: int = 1) -> np.ndarray:
    """Crop ``labels`` to the bounding box of its nonzero voxels, zero-padded by ``pad``."""
    nz = np.nonzero(labels)
    if len(nz[0]) == 0:
        raise EmptyMaskError("no labelled voxels")
    lo = [int(a.min()) for a in nz]
    hi = [int(a.max()) + 1 for a in nz]
    box = labels[lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]]
    return np.pad(box, pad, mode="constant", constant_values=0)


def shifted(arr: np.ndarray, offset) -> np.ndarray:
    """``out[x] = arr[x + offset]``; valid on zero-padded arrays for unit offsets."""
    return np.roll(arr, shift=tuple(-o for o in offset), axis=(0, 1, 2))


def safe_div(num, den, fill=0.0):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    out = np.full(np.broadcast(num, den).shape, fill, dtype=np.float64)
    np.divide(num, den, out=out, where=den != 0)
    return out


def plogp(p: np.ndarray, axis=None) -> np.ndarray:
    """Shannon entropy in bits, summing only over positive entries."""
    p = np.asarray(p, dtype=np.float64)
    logs = np.zeros_like(p)
    np.log2(p, out=logs, where=p > 0)
    return -np.sum(p * logs, axis=axis)
