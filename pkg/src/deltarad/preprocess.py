"""Reference-ROI normalization, resampling and fixed-bin-count discretization."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from scipy import ndimage

from .errors import (
    ConfigError,
    DegenerateOutputGridError,
    EmptyMaskError,
    EmptyReferenceMaskError,
    ZeroMedianError,
)
from .volume import MaskROI, VolumeGrid, check_same_grid


@dataclass(frozen=True)
class PreprocessConfig:
    # True, False, or "auto" (disable when the cohort has no reference masks)
    normalize: Union[bool, str] = True
    bin_count: int = 64
    resample_spacing: Optional[Tuple[float, float, float]] = None
    image_interp: str = "trilinear"
    mask_interp: str = "nearest"

    def __post_init__(self):
        if self.normalize not in (True, False, "auto"):
            raise ConfigError(f"normalize must be true, false or 'auto', got {self.normalize!r}")
        if int(self.bin_count) != self.bin_count or self.bin_count < 2:
            raise ConfigError(f"bin_count must be an integer >= 2, got {self.bin_count}")
        if self.resample_spacing is not None:
            sp = tuple(float(s) for s in self.resample_spacing)
            if len(sp) != 3 or any(not (s > 0) for s in sp):
                raise ConfigError(f"resample_spacing must be 3 positive reals, got {self.resample_spacing}")
            object.__setattr__(self, "resample_spacing", sp)
        if self.image_interp != "trilinear":
            raise ConfigError(f"unsupported image_interp {self.image_interp!r}")
        if self.mask_interp != "nearest":
            raise ConfigError(f"unsupported mask_interp {self.mask_interp!r}")

    def to_dict(self) -> dict:
        return {
            "normalize": self.normalize,
            "bin_count": int(self.bin_count),
            "resample_spacing": None if self.resample_spacing is None else list(self.resample_spacing),
            "image_interp": self.image_interp,
            "mask_interp": self.mask_interp,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PreprocessConfig":
        known = {"normalize", "bin_count", "resample_spacing", "image_interp", "mask_interp"}
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown preprocess keys: {sorted(extra)}")
        return cls(**doc)


@dataclass(frozen=True)
class DiscretizedVolume:
    """Gray-level labels in ``1..bin_count`` inside the mask, 0 outside."""

    labels: np.ndarray
    bin_count: int
    bin_min: float
    bin_width: float
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)

    @property
    def mask(self) -> np.ndarray:
        return self.labels > 0

    @property
    def bin_edges(self) -> Tuple[float, float]:
        return (self.bin_min, self.bin_width)


def normalize_by_reference(volume: VolumeGrid, ref_mask: MaskROI) -> VolumeGrid:
    """Divide every voxel by the median intensity inside ``ref_mask``."""
    check_same_grid(volume, ref_mask)
    if ref_mask.is_empty():
        raise EmptyReferenceMaskError(f"{ref_mask.label} reference mask is empty")
    median = float(np.median(volume.data[ref_mask.voxels]))
    if median == 0:
        raise ZeroMedianError(f"median intensity inside {ref_mask.label} is zero")
    return volume.with_data(volume.data / median)


def _output_dims(dims, spacing, new_spacing):
    out = tuple(int(round(n * s / t)) for n, s, t in zip(dims, spacing, new_spacing))
    if any(n == 0 for n in out):
        raise DegenerateOutputGridError(
            f"resampling {dims} at {spacing} mm to {new_spacing} mm gives dims {out}"
        )
    return out


def resample(volume: VolumeGrid, mask: MaskROI, spacing) -> Tuple[VolumeGrid, MaskROI]:
    """Resample image (trilinear) and mask (nearest) to ``spacing``.

    The output grid keeps the first voxel centre at the same position and
    steps by the new spacing; samples beyond the last input voxel centre
    take the edge value.
    """
    check_same_grid(volume, mask)
    new_spacing = tuple(float(s) for s in spacing)
    if len(new_spacing) != 3 or any(not (s > 0) for s in new_spacing):
        raise DegenerateOutputGridError(f"spacing must be strictly positive, got {spacing}")
    if new_spacing == volume.spacing:
        return volume, mask
    out_dims = _output_dims(volume.dims, volume.spacing, new_spacing)
    axes = [np.arange(n) * (t / s) for n, s, t in zip(out_dims, volume.spacing, new_spacing)]
    coords = np.stack(np.meshgrid(*axes, indexing="ij"))
    img = ndimage.map_coordinates(volume.data, coords, order=1, mode="nearest")
    msk = ndimage.map_coordinates(mask.voxels.astype(np.uint8), coords, order=0, mode="nearest")
    new_vol = VolumeGrid(img, new_spacing, volume.origin, volume.intensity_unit)
    new_mask = MaskROI(msk.astype(bool), new_spacing, mask.origin, mask.label)
    return new_vol, new_mask


def discretize(volume: VolumeGrid, mask: MaskROI, bin_count: int = 64) -> DiscretizedVolume:
    """Fixed bin-count quantization over the in-mask intensity range."""
    check_same_grid(volume, mask)
    if mask.is_empty():
        raise EmptyMaskError(f"{mask.label} mask is empty")
    bin_count = int(bin_count)
    values = volume.data[mask.voxels]
    lo, hi = float(values.min()), float(values.max())
    width = (hi - lo) / bin_count
    labels = np.zeros(volume.dims, dtype=np.int32)
    if width > 0:
        lab = np.floor((values - lo) / width).astype(np.int64) + 1
        labels[mask.voxels] = np.minimum(lab, bin_count)
    else:
        width = 1.0
        labels[mask.voxels] = 1
    return DiscretizedVolume(labels, bin_count, lo, width, volume.spacing)
