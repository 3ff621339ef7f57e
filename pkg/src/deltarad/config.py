"""Pipeline configuration: nested dataclasses with JSON round-trip."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Tuple

from .cohort import ENDPOINTS
from .errors import ConfigError
from .preprocess import PreprocessConfig
from .stability import PerturbationSpec


def _check_unit(name: str, v: float):
    if not 0 < v <= 1:
        raise ConfigError(f"{name} must lie in (0, 1], got {v}")


@dataclass(frozen=True)
class StabilityConfig:
    threshold: float = 0.90
    rule: str = "all"  # or "median"
    perturbation: PerturbationSpec = field(default_factory=PerturbationSpec)

    def __post_init__(self):
        _check_unit("stability.threshold", self.threshold)
        if self.rule not in ("all", "median"):
            raise ConfigError(f"stability.rule must be 'all' or 'median', got {self.rule!r}")


@dataclass(frozen=True)
class CollinearityConfig:
    threshold: float = 0.90
    mode: str = "literal"  # or "recompute"

    def __post_init__(self):
        _check_unit("collinearity.threshold", self.threshold)
        if self.mode not in ("literal", "recompute"):
            raise ConfigError(f"collinearity.mode must be 'literal' or 'recompute', got {self.mode!r}")


@dataclass(frozen=True)
class DeltaConfig:
    baseline: str = "F1"

    def __post_init__(self):
        if self.baseline != "F1":
            raise ConfigError("only the F1 baseline is supported")


@dataclass(frozen=True)
class SurvivalConfig:
    endpoints: Tuple[str, ...] = ENDPOINTS
    top_k: int = 4
    skewness_cutoffs: Tuple[float, ...] = (0.973, 0.951)
    alpha: float = 0.05
    seed: int = 0
    n_perm: int = 10000
    min_node: int = 7
    cutpoint_endpoint: str = "LFFS"
    rfe_response: str = "event"  # or "time"
    ancova_covariates: Tuple[str, ...] = ("baseline",)

    def __post_init__(self):
        object.__setattr__(self, "endpoints", tuple(self.endpoints))
        object.__setattr__(self, "skewness_cutoffs", tuple(float(c) for c in self.skewness_cutoffs))
        object.__setattr__(self, "ancova_covariates", tuple(self.ancova_covariates))
        if not self.endpoints:
            raise ConfigError("survival.endpoints must be nonempty")
        bad = [e for e in self.endpoints if e not in ENDPOINTS]
        if bad or self.cutpoint_endpoint not in ENDPOINTS:
            raise ConfigError(f"unknown endpoints: {bad or [self.cutpoint_endpoint]}")
        if self.top_k < 1:
            raise ConfigError("survival.top_k must be >= 1")
        _check_unit("survival.alpha", self.alpha)
        if self.n_perm < 1 or self.min_node < 1:
            raise ConfigError("survival.n_perm and survival.min_node must be >= 1")
        if self.rfe_response not in ("event", "time"):
            raise ConfigError(f"survival.rfe_response must be 'event' or 'time', got {self.rfe_response!r}")
        if set(self.ancova_covariates) - {"baseline"}:
            raise ConfigError("survival.ancova_covariates supports only 'baseline'")


_SECTIONS = {
    "preprocess": PreprocessConfig,
    "stability": StabilityConfig,
    "collinearity": CollinearityConfig,
    "delta": DeltaConfig,
    "survival": SurvivalConfig,
}


@dataclass(frozen=True)
class PipelineConfig:
    manifest: str = "manifest.json"
    outcomes: Optional[str] = "outcomes.csv"
    output_dir: str = "out"
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    stability: StabilityConfig = field(default_factory=StabilityConfig)
    collinearity: CollinearityConfig = field(default_factory=CollinearityConfig)
    delta: DeltaConfig = field(default_factory=DeltaConfig)
    survival: SurvivalConfig = field(default_factory=SurvivalConfig)

    def to_dict(self) -> dict:
        return {
            "manifest": self.manifest,
            "outcomes": self.outcomes,
            "output_dir": self.output_dir,
            "preprocess": self.preprocess.to_dict(),
            "stability": {
                "threshold": self.stability.threshold,
                "rule": self.stability.rule,
                "perturbation": self.stability.perturbation.to_dict(),
            },
            "collinearity": {"threshold": self.collinearity.threshold, "mode": self.collinearity.mode},
            "delta": {"baseline": self.delta.baseline},
            "survival": {
                "endpoints": list(self.survival.endpoints),
                "top_k": self.survival.top_k,
                "skewness_cutoffs": list(self.survival.skewness_cutoffs),
                "alpha": self.survival.alpha,
                "seed": self.survival.seed,
                "n_perm": self.survival.n_perm,
                "min_node": self.survival.min_node,
                "cutpoint_endpoint": self.survival.cutpoint_endpoint,
                "rfe_response": self.survival.rfe_response,
                "ancova_covariates": list(self.survival.ancova_covariates),
            },
        }

    @classmethod
    def from_dict(cls, doc: dict, base: Optional[Path] = None) -> "PipelineConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        known = {"manifest", "outcomes", "output_dir", *_SECTIONS}
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        kw = {}
        for k in ("manifest", "outcomes", "output_dir"):
            if k in doc:
                v = doc[k]
                if v is not None and base is not None and not Path(v).is_absolute():
                    v = str(base / v)
                kw[k] = v
        try:
            if "preprocess" in doc:
                kw["preprocess"] = PreprocessConfig.from_dict(doc["preprocess"])
            if "stability" in doc:
                s = dict(doc["stability"])
                if "perturbation" in s:
                    s["perturbation"] = PerturbationSpec.from_dict(s["perturbation"])
                kw["stability"] = StabilityConfig(**s)
            if "collinearity" in doc:
                kw["collinearity"] = CollinearityConfig(**doc["collinearity"])
            if "delta" in doc:
                kw["delta"] = DeltaConfig(**doc["delta"])
            if "survival" in doc:
                kw["survival"] = SurvivalConfig(**doc["survival"])
        except TypeError as exc:
            raise ConfigError(f"bad config section: {exc}") from None
        return cls(**kw)

    def with_overrides(self, **kw) -> "PipelineConfig":
        """Replace scalars; dotted keys (``"survival.seed"``) reach into sections."""
        cfg = self
        for key, val in kw.items():
            if val is None:
                continue
            if "." in key:
                sec, name = key.split(".", 1)
                cfg = replace(cfg, **{sec: replace(getattr(cfg, sec), **{name: val})})
            else:
                cfg = replace(cfg, **{key: val})
        return cfg

    def analysis_hash(self) -> str:
        """Hash of everything that affects results (paths and output location excluded)."""
        d = self.to_dict()
        for k in ("manifest", "outcomes", "output_dir"):
            d.pop(k)
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return PipelineConfig.from_dict(doc, base=path.parent)


def save_config(cfg: PipelineConfig, path):
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
