"""Image and mask containers.

Arrays are indexed ``[i, j, k]`` along (x, y, z). Flattening with
``order="F"`` gives the on-disk x-fastest linearization
``i + nx * (j + ny * k)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .errors import (
    EmptyMaskError,
    GridMismatchError,
    InvalidMaskError,
    NonFiniteDataError,
    NonPositiveSpacingError,
)

Vec3 = Tuple[float, float, float]


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class VolumeGrid:
    data: np.ndarray
    spacing: Vec3 = (1.0, 1.0, 1.0)
    origin: Vec3 = (0.0, 0.0, 0.0)
    intensity_unit: str = ""
    # qform/sform are carried through but geometry is treated as axis-aligned
    affine: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise ValueError(f"volume must be 3D, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise NonFiniteDataError("volume contains non-finite intensities")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or any(not (s > 0) for s in spacing):
            raise NonPositiveSpacingError(f"spacing must be strictly positive, got {spacing}")
        object.__setattr__(self, "data", _readonly(data))
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(n) for n in self.data.shape)

    @property
    def voxel_volume(self) -> float:
        return float(np.prod(self.spacing))

    def flat_data(self) -> np.ndarray:
        return self.data.ravel(order="F")

    @classmethod
    def from_flat(cls, flat, dims, **kwargs) -> "VolumeGrid":
        flat = np.asarray(flat)
        if flat.size != int(np.prod(dims)):
            raise ValueError(f"{flat.size} values do not fill dims {tuple(dims)}")
        return cls(flat.reshape(tuple(dims), order="F"), **kwargs)

    def same_grid(self, other, rtol: float = 1e-6) -> bool:
        if self.dims != other.dims:
            return False
        return bool(np.allclose(self.spacing, other.spacing, rtol=rtol, atol=0.0))

    def with_data(self, data) -> "VolumeGrid":
        return VolumeGrid(data, self.spacing, self.origin, self.intensity_unit, self.affine)


@dataclass(frozen=True)
class MaskROI:
    voxels: np.ndarray
    spacing: Vec3 = (1.0, 1.0, 1.0)
    origin: Vec3 = (0.0, 0.0, 0.0)
    label: str = "GTV"

    def __post_init__(self):
        vox = np.asarray(self.voxels)
        if vox.ndim != 3:
            raise ValueError(f"mask must be 3D, got shape {vox.shape}")
        if vox.dtype != bool:
            if not np.all((vox == 0) | (vox == 1)):
                raise InvalidMaskError(f"{self.label} mask values must be in {{0, 1}}")
            vox = vox.astype(bool)
        spacing = tuple(float(s) for s in self.spacing)
        if any(not (s > 0) for s in spacing):
            raise NonPositiveSpacingError(f"spacing must be strictly positive, got {spacing}")
        object.__setattr__(self, "voxels", _readonly(vox))
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(n) for n in self.voxels.shape)

    @property
    def count(self) -> int:
        return int(self.voxels.sum())

    def is_empty(self) -> bool:
        return not self.voxels.any()

    def require_nonempty(self):
        if self.is_empty():
            raise EmptyMaskError(f"{self.label} mask is empty")

    def with_voxels(self, voxels) -> "MaskROI":
        return MaskROI(voxels, self.spacing, self.origin, self.label)

    @classmethod
    def like(cls, volume: VolumeGrid, voxels, label: str = "GTV") -> "MaskROI":
        return cls(voxels, volume.spacing, volume.origin, label)


def check_same_grid(volume: VolumeGrid, mask: MaskROI, rtol: float = 1e-6):
    """Raise GridMismatchError unless ``mask`` lives on ``volume``'s grid."""
    if volume.dims != mask.dims:
        raise GridMismatchError(
            f"{mask.label} mask dims {mask.dims} differ from image dims {volume.dims}"
        )
    if not np.allclose(volume.spacing, mask.spacing, rtol=rtol, atol=0.0):
        raise GridMismatchError(
            f"{mask.label} mask spacing {mask.spacing} differs from image spacing {volume.spacing}"
        )
