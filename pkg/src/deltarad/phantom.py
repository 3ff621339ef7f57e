"""Synthetic cohorts: ellipsoid lesions with skew-normal texture, and survival
times from an exponential proportional-hazards model.

Every course draws from its own ``SeedSequence((seed, course_index))`` so
courses can be generated in any order or in parallel.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import ndimage, optimize

from .cohort import (
    ENDPOINTS,
    FRACTION_LABELS,
    OutcomeRow,
    OutcomeTable,
    SCHEMA_VERSION,
    format_outcomes,
)
from .errors import ConfigError, LesionExceedsGridError
from .nifti import mask_to_volume, save_nifti
from .tables import write_csv
from .volume import MaskROI, VolumeGrid

SKEWNESS = "original_firstorder_Skewness"
VOXEL_VOLUME = "original_shape_VoxelVolume"


def sn_delta(alpha):
    return np.asarray(alpha, dtype=np.float64) / np.sqrt(1 + np.asarray(alpha, dtype=np.float64) ** 2)


def sn_moments(alpha):
    """Mean, SD and skewness of the standard skew-normal with shape ``alpha``."""
    d = sn_delta(alpha)
    m = d * np.sqrt(2 / np.pi)
    var = 1 - m**2
    skew = (4 - np.pi) / 2 * m**3 / var**1.5
    return m, np.sqrt(var), skew


@dataclass(frozen=True)
class LesionModel:
    radii_mm: Tuple[float, float, float] = (15.0, 13.0, 12.0)
    radius_jitter: float = 0.4  # per-course uniform relative scale
    tissue_margin: float = 1.5  # textured tissue extends this far beyond the GTV (radius ratio)
    intensity_mean: Tuple[float, float] = (80.0, 140.0)  # per-course uniform range
    intensity_sd: Tuple[float, float] = (10.0, 25.0)
    alpha_f1: Tuple[float, float] = (1.5, 5.0)  # uniform range of F1 shape parameter
    skew_drift: float = -0.05  # mean change of alpha per fraction
    skew_drift_sd: float = 0.08  # between-course SD of that change
    volume_drift: float = 0.0  # relative volume change per fraction
    texture_sigma: Tuple[float, float] = (0.6, 2.0)  # smoothing of the latent fields, voxels
    fraction_noise: float = 0.05  # per-fraction noise, in units of intensity_sd
    sim_noise: float = 0.02  # extra SIM-vs-F1 noise, in units of intensity_sd
    gain_sd: float = 0.05  # per-fraction global intensity gain
    background_mean: float = 40.0
    background_sd: float = 5.0


@dataclass(frozen=True)
class HeartModel:
    enabled: bool = True
    radii_mm: Tuple[float, float, float] = (9.0, 9.0, 9.0)
    intensity: float = 200.0


@dataclass(frozen=True)
class ThresholdEffect:
    feature: str
    cutoff: float
    log_hr: float  # applied when the ratio exceeds the cutoff


@dataclass(frozen=True)
class SurvivalModel:
    baseline_hazard: float = 1.0 / 365.0  # per day
    betas: Dict[str, float] = field(default_factory=dict)
    thresholds: Tuple[ThresholdEffect, ...] = ()
    censoring_rate: float = 0.2
    endpoints: Tuple[str, ...] = ENDPOINTS  # endpoints carrying the effects


@dataclass(frozen=True)
class PhantomSpec:
    seed: int = 0
    n_courses: int = 20
    dims: Tuple[int, int, int] = (64, 56, 48)
    spacing: Tuple[float, float, float] = (1.5, 1.5, 2.0)
    lesion: LesionModel = field(default_factory=LesionModel)
    heart: HeartModel = field(default_factory=HeartModel)
    survival: SurvivalModel = field(default_factory=SurvivalModel)

    def __post_init__(self):
        if self.n_courses < 1:
            raise ConfigError("n_courses must be >= 1")
        if not 0 <= self.survival.censoring_rate < 1:
            raise ConfigError("censoring_rate must lie in [0, 1)")
        if self.survival.baseline_hazard <= 0:
            raise ConfigError("baseline_hazard must be > 0")
        if min(self.spacing) <= 0 or min(self.dims) < 1:
            raise ConfigError("dims and spacing must be positive")
        check_fits(self)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["survival"]["thresholds"] = [asdict(t) for t in self.survival.thresholds]
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "PhantomSpec":
        d = dict(d)
        les = LesionModel(**_tuples(d.pop("lesion", {})))
        heart = HeartModel(**_tuples(d.pop("heart", {})))
        sv = dict(d.pop("survival", {}))
        sv["thresholds"] = tuple(ThresholdEffect(**t) for t in sv.get("thresholds", ()))
        if "endpoints" in sv:
            sv["endpoints"] = tuple(sv["endpoints"])
        surv = SurvivalModel(**sv)
        return cls(lesion=les, heart=heart, survival=surv, **_tuples(d))


def _tuples(d: Mapping) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}


def _fraction_step(label: str) -> int:
    # SIM shares F1 geometry and texture parameters
    return max(FRACTION_LABELS.index(label) - 1, 0)


def _centres(spec: PhantomSpec):
    ext = np.array(spec.dims) * np.array(spec.spacing)
    lesion = ext * np.array([0.35, 0.5, 0.5])
    heart = ext * np.array([0.8, 0.5, 0.5])
    return lesion, heart


def max_radius_scale(spec: PhantomSpec) -> float:
    les = spec.lesion
    vol = max(1.0, (1 + les.volume_drift) ** 4)
    return (1 + les.radius_jitter) * vol ** (1 / 3)


def check_fits(spec: PhantomSpec):
    """Lesion (at its largest) and heart must lie inside the grid and apart."""
    ext = np.array(spec.dims) * np.array(spec.spacing)
    lc, hc = _centres(spec)
    r = np.array(spec.lesion.radii_mm) * max_radius_scale(spec) * max(spec.lesion.tissue_margin, 1.0)
    if np.any(lc - r < 0) or np.any(lc + r > ext):
        raise LesionExceedsGridError(f"lesion radii {tuple(r.round(2))} mm exceed the grid extent {tuple(ext)}")
    if spec.heart.enabled:
        hr = np.array(spec.heart.radii_mm)
        if np.any(hc - hr < 0) or np.any(hc + hr > ext):
            raise LesionExceedsGridError("heart ellipsoid exceeds the grid")
        if lc[0] + r[0] >= hc[0] - hr[0]:
            raise LesionExceedsGridError("lesion and heart ellipsoids overlap")


@dataclass(frozen=True)
class CourseParams:
    radius_scale: float
    mean: float
    sd: float
    sigma: float
    alpha: Dict[str, float]  # shape parameter per fraction label
    gains: Dict[str, float]


def course_params(spec: PhantomSpec, course_index: int) -> CourseParams:
    rng = _course_rng(spec, course_index, 0)
    les = spec.lesion
    scale = 1 + les.radius_jitter * (2 * rng.random() - 1)
    a1 = rng.uniform(*les.alpha_f1)
    drift = les.skew_drift + les.skew_drift_sd * rng.standard_normal()
    alpha = {lab: a1 + drift * _fraction_step(lab) for lab in FRACTION_LABELS}
    gains = {lab: float(1 + les.gain_sd * rng.standard_normal()) for lab in FRACTION_LABELS}
    mean, sd, sigma = (float(rng.uniform(*r)) for r in (les.intensity_mean, les.intensity_sd, les.texture_sigma))
    return CourseParams(float(scale), mean, sd, sigma, alpha, gains)


def truth_ratios(spec: PhantomSpec, n: Optional[int] = None) -> pd.DataFrame:
    """Ground-truth F5/F1 ratios of skewness and volume, per course."""
    rows = {}
    les = spec.lesion
    for i in range(spec.n_courses if n is None else n):
        p = course_params(spec, i)
        s1 = sn_moments(p.alpha["F1"])[2]
        s5 = sn_moments(p.alpha["F5"])[2]
        rows[course_id(i)] = {SKEWNESS: float(s5 / s1), VOXEL_VOLUME: float((1 + les.volume_drift) ** 4)}
    return pd.DataFrame.from_dict(rows, orient="index")


def course_id(i: int) -> str:
    return f"C{i:03d}"


def _course_rng(spec: PhantomSpec, course_index: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(spec.seed), int(course_index), int(stream)]))


def _ellipsoid(spec: PhantomSpec, centre, radii) -> np.ndarray:
    grids = np.meshgrid(*[np.arange(n) * s for n, s in zip(spec.dims, spec.spacing)], indexing="ij")
    q = sum(((g - c) / r) ** 2 for g, c, r in zip(grids, centre, radii))
    return q <= 1.0


def _std_field(rng, dims, sigma) -> np.ndarray:
    z = rng.standard_normal(dims)
    if sigma > 0:
        z = ndimage.gaussian_filter(z, sigma, mode="wrap")
    return (z - z.mean()) / z.std()


@dataclass
class CohortRecord:
    course_id: str
    patient_id: str
    images: Dict[str, VolumeGrid]
    gtv: Dict[str, MaskROI]
    heart: Dict[str, Optional[MaskROI]]
    params: CourseParams


def generate_phantom_course(spec: PhantomSpec, course_index: int) -> CohortRecord:
    les = spec.lesion
    p = course_params(spec, course_index)
    tex = _course_rng(spec, course_index, 1)
    z0 = _std_field(tex, spec.dims, p.sigma)
    z1 = _std_field(tex, spec.dims, p.sigma)
    lc, hc = _centres(spec)
    heart_mask = _ellipsoid(spec, hc, spec.heart.radii_mm) if spec.heart.enabled else None

    images, gtv, heart = {}, {}, {}
    for k, lab in enumerate(FRACTION_LABELS):
        rng = _course_rng(spec, course_index, 2 + k)
        vol_scale = (1 + les.volume_drift) ** _fraction_step(lab)
        radii = np.array(les.radii_mm) * p.radius_scale * vol_scale ** (1 / 3)
        mask = _ellipsoid(spec, lc, radii)
        tissue = _ellipsoid(spec, lc, radii * les.tissue_margin) | mask
        a = p.alpha[lab]
        d = sn_delta(a)
        mu, sd, _ = sn_moments(a)
        sn = (d * np.abs(z0) + np.sqrt(1 - d * d) * z1 - mu) / sd
        noise = les.fraction_noise * rng.standard_normal(spec.dims)
        if lab == "SIM":
            noise = noise + les.sim_noise * rng.standard_normal(spec.dims)
        img = les.background_mean + les.background_sd * rng.standard_normal(spec.dims)
        img = np.where(tissue, p.mean + p.sd * (sn + noise), img)
        if heart_mask is not None:
            img = np.where(heart_mask, spec.heart.intensity, img)
        img = img * p.gains[lab]
        vg = VolumeGrid(img, spec.spacing, (0.0, 0.0, 0.0))
        images[lab] = vg
        gtv[lab] = MaskROI.like(vg, mask, "GTV")
        heart[lab] = MaskROI.like(vg, heart_mask, "heart") if heart_mask is not None else None
    cid = course_id(course_index)
    return CohortRecord(cid, f"P{course_index:03d}", images, gtv, heart, p)


def linear_predictor(spec: PhantomSpec, X: pd.DataFrame) -> np.ndarray:
    sm = spec.survival
    lp = np.zeros(len(X))
    for name, b in sm.betas.items():
        lp += b * X[name].to_numpy(dtype=np.float64)
    for th in sm.thresholds:
        lp += th.log_hr * (X[th.feature].to_numpy(dtype=np.float64) > th.cutoff)
    return lp


def censoring_bound(hazards: np.ndarray, rate: float) -> float:
    """Upper limit c of Uniform(0, c) censoring giving the expected censored share ``rate``."""
    if rate <= 0:
        return np.inf

    def share(log_c):
        hc = hazards * np.exp(log_c)
        return float(np.mean(-np.expm1(-hc) / hc)) - rate

    lo, hi = np.log(1e-6 / hazards.max()), np.log(1e6 / hazards.min())
    return float(np.exp(optimize.brentq(share, lo, hi, xtol=1e-12)))


def draw_survival(hazards, rate: float, rng: np.random.Generator):
    """Exponential event times by inverse CDF plus uniform censoring."""
    h = np.asarray(hazards, dtype=np.float64)
    u = rng.random(h.size)
    t = -np.log1p(-u) / h
    c_max = censoring_bound(h, rate)
    if np.isinf(c_max):
        return t, np.ones(h.size, dtype=np.int64)
    c = rng.random(h.size) * c_max
    return np.minimum(t, c), (t <= c).astype(np.int64)


def generate_survival(spec: PhantomSpec, X: pd.DataFrame, stream: int = 0) -> OutcomeTable:
    """Outcomes for the courses in ``X`` (rows are course ids).

    Endpoints listed in ``spec.survival.endpoints`` follow the configured
    effects; the rest are drawn with all effects switched off.
    """
    sm = spec.survival
    lp = linear_predictor(spec, X)
    times, events = {}, {}
    for k, ep in enumerate(ENDPOINTS):
        rng = np.random.default_rng(np.random.SeedSequence([int(spec.seed), 10**6 + stream, k]))
        eff = lp if ep in sm.endpoints else np.zeros_like(lp)
        times[ep], events[ep] = draw_survival(sm.baseline_hazard * np.exp(eff), sm.censoring_rate, rng)
    rows = [
        OutcomeRow(str(cid), {ep: float(times[ep][i]) for ep in ENDPOINTS}, {ep: int(events[ep][i]) for ep in ENDPOINTS})
        for i, cid in enumerate(X.index)
    ]
    return OutcomeTable(rows)


def write_phantom_cohort(spec: PhantomSpec, outdir) -> Path:
    """Write NIfTI volumes, manifest.json, outcomes.csv and truth.csv; return the manifest path."""
    out = Path(outdir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    courses = []
    for i in range(spec.n_courses):
        rec = generate_phantom_course(spec, i)
        fr = {}
        for lab in FRACTION_LABELS:
            stem = f"images/{rec.course_id}_{lab}"
            save_nifti(rec.images[lab], out / f"{stem}_image.nii.gz")
            save_nifti(mask_to_volume(rec.gtv[lab]), out / f"{stem}_gtv.nii.gz")
            entry = {"image": f"{stem}_image.nii.gz", "gtv": f"{stem}_gtv.nii.gz"}
            if rec.heart[lab] is not None:
                save_nifti(mask_to_volume(rec.heart[lab]), out / f"{stem}_heart.nii.gz")
                entry["heart"] = f"{stem}_heart.nii.gz"
            fr[lab] = entry
        courses.append({"course_id": rec.course_id, "patient_id": rec.patient_id, "fractions": fr})
    manifest = {"schema_version": SCHEMA_VERSION, "courses": courses}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    truth = truth_ratios(spec)
    (out / "outcomes.csv").write_text(format_outcomes(generate_survival(spec, truth)))
    write_csv(truth.reset_index().rename(columns={"index": "course_id"}), out / "truth.csv")
    (out / "phantom.json").write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n")
    return out / "manifest.json"

