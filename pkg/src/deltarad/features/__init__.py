"""107-feature radiomics extractor (shape, first order and five texture classes)."""

from __future__ import annotations

import hashlib
import json
from typing import Optional

from ..errors import NormalizationInputMissingError
from ..preprocess import PreprocessConfig, discretize, normalize_by_reference, resample
from ..volume import MaskROI, VolumeGrid, check_same_grid
from .firstorder import extract_first_order
from .glcm import build_glcm, glcm_features
from .gldm import gldm_features
from .glrlm import glrlm_features
from .glszm import glszm_features
from .names import CLASSES, FEATURE_CLASS, FEATURE_INDEX, FEATURE_NAMES, class_names, qualified, resolve
from .ngtdm import ngtdm_features
from .shape import extract_shape
from .vector import FeatureVector

__all__ = [
    "FEATURE_NAMES",
    "FEATURE_INDEX",
    "FEATURE_CLASS",
    "CLASSES",
    "FeatureVector",
    "build_glcm",
    "class_names",
    "config_hash",
    "extract_all",
    "extract_first_order",
    "extract_shape",
    "glcm_features",
    "gldm_features",
    "glrlm_features",
    "glszm_features",
    "ngtdm_features",
    "qualified",
    "resolve",
    "texture_features",
]


def config_hash(cfg: PreprocessConfig) -> str:
    blob = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def texture_features(disc) -> FeatureVector:
    return FeatureVector.merge(
        glcm_features(disc),
        gldm_features(disc),
        glrlm_features(disc),
        glszm_features(disc),
        ngtdm_features(disc),
    )


def extract_all(
    volume: VolumeGrid,
    mask: MaskROI,
    cfg: Optional[PreprocessConfig] = None,
    reference: Optional[MaskROI] = None,
) -> FeatureVector:
    """Run preprocessing and all seven feature classes.

    ``reference`` is the normalization ROI (heart); it is required when
    ``cfg.normalize`` is True and ignored otherwise.
    """
    cfg = cfg or PreprocessConfig(normalize=False)
    check_same_grid(volume, mask)
    mask.require_nonempty()
    if cfg.normalize is True:
        if reference is None:
            raise NormalizationInputMissingError("normalization requested but no reference mask given")
        volume = normalize_by_reference(volume, reference)
    if cfg.resample_spacing is not None:
        volume, mask = resample(volume, mask, cfg.resample_spacing)
        mask.require_nonempty()
    disc = discretize(volume, mask, cfg.bin_count)
    fv = FeatureVector.merge(
        extract_shape(mask, volume.spacing),
        extract_first_order(volume, mask, disc),
        texture_features(disc),
    )
    return FeatureVector(fv.values, fv.degenerate, config_hash=config_hash(cfg)).ordered()
