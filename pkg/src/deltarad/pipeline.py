"""Staged delta-radiomics pipeline.

Stages read their inputs from, and write their artifacts to, one output
directory, so each can also be run on its own from the CLI:

    extract -> stability -> prune -> delta -> survive -> report
"""

from __future__ import annotations

import hashlib
import json
import logging
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from . import __version__
from .cohort import DELTA_FRACTIONS, FRACTION_LABELS, join_outcomes, load_manifest, load_outcomes
from .config import PipelineConfig
from .delta import compute_deltas, trend_summary
from .errors import (
    DeltaRadError,
    MissingUpstreamArtifactError,
    NormalizationInputMissingError,
    StageError,
    TooFewCoursesError,
)
from .features import FEATURE_NAMES, extract_all
from .nifti import load_mask, load_nifti
from .selection import pearson_matrix, prune_collinear
from .stability import PerturbationSpec, apply_perturbation, stability_gate, spatial_stability, temporal_stability
from .survival import (
    ancova,
    cutpoint_search,
    km_estimate,
    logrank_groups,
    multivariate_cox_with_rfe,
    univariate_screen,
)
from .svg import heatmap, small_multiples, step_curves
from .tables import write_csv

log = logging.getLogger(__name__)

STAGES = ("extract", "stability", "prune", "delta", "survive", "report")
SKEWNESS = "original_firstorder_Skewness"


# ---------------------------------------------------------------- helpers

def _require(out: Path, name: str) -> Path:
    p = out / name
    if not p.exists():
        raise MissingUpstreamArtifactError(f"{p} not found; run the upstream stage first")
    return p


def _write_json(path: Path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _record(out: Path, stage: str, notes: List[str]):
    """Persist the assumption flags raised by one stage."""
    path = out / "assumptions.json"
    doc = json.loads(path.read_text()) if path.exists() else {}
    doc[stage] = list(notes)
    _write_json(path, doc)


def _by_fraction(df: pd.DataFrame, fraction: str, features) -> pd.DataFrame:
    sub = df[df["fraction"] == fraction].set_index("course_id")
    sub.index.name = None
    return sub[list(features)]


# ---------------------------------------------------------------- extract

def _extract_task(task):
    cid, frac, rep, paths, pre, pert, normalize = task
    from .preprocess import PreprocessConfig

    try:
        vol = load_nifti(paths["image"])
        gtv = load_mask(paths["gtv"], like=vol, label="GTV")
        heart = load_mask(paths["heart"], like=vol, label="heart") if normalize else None
        draw = None
        if rep is not None:
            gtv, draw = apply_perturbation(gtv, PerturbationSpec.from_dict(pert), rep)
        cfg = replace(PreprocessConfig.from_dict(pre), normalize=normalize)
        fv = extract_all(vol, gtv, cfg, heart)
    except DeltaRadError as exc:
        raise type(exc)(f"course {cid} fraction {frac}: {exc}") from None
    return fv.as_array(FEATURE_NAMES), sorted(fv.degenerate), draw


def _normalization_plan(cfg: PipelineConfig, manifest):
    notes = []
    mode = cfg.preprocess.normalize
    missing = [
        (c.course_id, lab) for c in manifest.courses for lab, fp in c.fractions.items() if fp.heart is None
    ]
    if mode is True:
        if missing:
            cid, lab = missing[0]
            raise NormalizationInputMissingError(
                f"course {cid} fraction {lab}: normalization requested but no heart mask in the manifest"
            )
        return True, notes
    if mode == "auto":
        if missing:
            notes.append(
                f"normalize=auto: {len(missing)} fraction(s) lack a heart mask (first: course {missing[0][0]} "
                f"{missing[0][1]}); normalization disabled for the whole cohort"
            )
            return False, notes
        return True, notes
    return False, notes


def stage_extract(cfg: PipelineConfig, out: Path, threads: int = 1) -> List[str]:
    manifest = load_manifest(cfg.manifest)
    normalize, notes = _normalization_plan(cfg, manifest)
    pre = cfg.preprocess.to_dict()
    pert = cfg.stability.perturbation.to_dict()

    def paths(fp):
        return {"image": str(fp.image), "gtv": str(fp.gtv), "heart": None if fp.heart is None else str(fp.heart)}

    tasks, keys = [], []
    for c in manifest.courses:
        for lab in FRACTION_LABELS:
            if lab in c.fractions:
                tasks.append((c.course_id, lab, None, paths(c.fractions[lab]), pre, pert, normalize))
                keys.append((c.course_id, lab, None))
        for r in range(cfg.stability.perturbation.repetitions):
            tasks.append((c.course_id, "F1", r, paths(c.fractions["F1"]), pre, pert, normalize))
            keys.append((c.course_id, "F1", r + 1))

    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_extract_task, tasks, chunksize=4))
    else:
        results = [_extract_task(t) for t in tasks]

    base_rows, pert_rows, draws, flags = [], [], [], []
    for (cid, lab, rep), (vals, degen, draw) in zip(keys, results):
        if rep is None:
            base_rows.append([cid, lab, *vals])
        else:
            pert_rows.append([cid, rep, *vals])
            draws.append((cid, rep, draw.op, draw.connectivity, int(draw.fell_back)))
            if draw.fell_back:
                notes.append(f"course {cid} repetition {rep}: erosion would empty the GTV, dilated instead")
        for name in degen:
            flags.append((cid, lab, 0 if rep is None else rep, name))
    write_csv(pd.DataFrame(base_rows, columns=["course_id", "fraction", *FEATURE_NAMES]), out / "features.csv")
    write_csv(pd.DataFrame(pert_rows, columns=["course_id", "repetition", *FEATURE_NAMES]), out / "features_perturbed.csv")
    write_csv(
        pd.DataFrame(draws, columns=["course_id", "repetition", "op", "connectivity", "fell_back"]),
        out / "perturbations.csv",
    )
    write_csv(pd.DataFrame(flags, columns=["course_id", "fraction", "repetition", "feature"]), out / "degenerate_features.csv")
    if flags:
        notes.append(f"{len(flags)} feature value(s) set by a degenerate-input convention (see degenerate_features.csv)")
    return notes


# ---------------------------------------------------------------- stability

def stage_stability(cfg: PipelineConfig, out: Path) -> List[str]:
    df = pd.read_csv(_require(out, "features.csv"), dtype={"course_id": str})
    pdf = pd.read_csv(_require(out, "features_perturbed.csv"), dtype={"course_id": str})
    notes = []
    sim = _by_fraction(df, "SIM", FEATURE_NAMES)
    f1 = _by_fraction(df, "F1", FEATURE_NAMES)
    paired = [c for c in f1.index if c in sim.index]
    if len(paired) < len(f1):
        notes.append(f"{len(f1) - len(paired)} course(s) without SIM excluded from temporal stability")
    if len(paired) < 2:
        raise TooFewCoursesError(f"temporal stability needs >= 2 courses with SIM and F1, got {len(paired)}")
    temporal = temporal_stability(sim.loc[paired], f1.loc[paired])
    reps = []
    for r in sorted(pdf["repetition"].unique()):
        sub = pdf[pdf["repetition"] == r].set_index("course_id")[FEATURE_NAMES]
        sub.index.name = None
        reps.append(sub)
    spatial = spatial_stability(f1, reps)
    undefined = [n for n in FEATURE_NAMES if not np.isfinite(temporal[n]) or not np.all(np.isfinite(spatial.loc[n]))]
    if undefined:
        notes.append(f"{len(undefined)} feature(s) with undefined CCC (constant across the cohort) marked unstable")
    if cfg.stability.rule != "all":
        notes.append(f"stability rule '{cfg.stability.rule}' instead of requiring every repetition to pass")
    report = stability_gate(temporal, spatial, cfg.stability.threshold, cfg.stability.rule)
    report.to_csv(out / "stability.csv")
    return notes


# ---------------------------------------------------------------- prune

def stage_prune(cfg: PipelineConfig, out: Path) -> List[str]:
    st = pd.read_csv(_require(out, "stability.csv"))
    df = pd.read_csv(_require(out, "features.csv"), dtype={"course_id": str})
    stable = list(st.loc[st["stable"] == 1, "feature"])
    notes = []
    f1 = _by_fraction(df, "F1", stable)
    corr = pearson_matrix(f1)
    rep = prune_collinear(corr, cfg.collinearity.threshold, cfg.collinearity.mode)
    rep.to_csv(out / "correlation.csv", out / "collinearity_decisions.csv")
    const = [d.feature for d in rep.dropped if d.reason == "constant"]
    if const:
        notes.append(f"constant stable feature(s) dropped before pruning: {const}")
    if cfg.collinearity.mode != "literal":
        notes.append("collinearity pruning recomputes mean |r| after each drop")
    _write_json(
        out / "kept_features.json",
        {"stable": stable, "kept": rep.kept, "dropped": [d.feature for d in rep.dropped]},
    )
    return notes


# ---------------------------------------------------------------- delta

def _delta_inputs(out: Path, features):
    df = pd.read_csv(_require(out, "features.csv"), dtype={"course_id": str})
    return {f: _by_fraction(df, f, features) for f in DELTA_FRACTIONS if (df["fraction"] == f).any()}


def stage_delta(cfg: PipelineConfig, out: Path) -> List[str]:
    kept = json.loads(_require(out, "kept_features.json").read_text())["kept"]
    ds = compute_deltas(_delta_inputs(out, kept), kept)
    notes = [f"zero F1 baseline excluded: course {c} feature {f}" for c, f in ds.excluded]
    write_csv(ds.long_frame(), out / "delta_long.csv")
    ratios = ds.ratio.copy()
    ratios.insert(0, "course_id", ratios.index)
    write_csv(ratios.reset_index(drop=True), out / "ratios.csv")
    if kept:
        trend_summary(ds).write(out)
    else:
        notes.append("no feature survived stability gating and pruning; trend tables not written")
    return notes


# ---------------------------------------------------------------- survival

def _outcome_arrays(cfg: PipelineConfig, course_ids):
    manifest = load_manifest(cfg.manifest)
    table = join_outcomes(manifest, load_outcomes(cfg.outcomes))
    have = set(r.course_id for r in table.rows)
    ids = [c for c in course_ids if c in have]
    res = {}
    for ep in cfg.survival.endpoints:
        _, t, e = table.endpoint(ep, ids)
        res[ep] = (np.asarray(t, dtype=np.float64), np.asarray(e, dtype=np.int64))
    return ids, res


def feature_ratio(out: Path, feature: str) -> pd.Series:
    """F5/F1 ratio of any extracted feature, indexed by course."""
    df = pd.read_csv(_require(out, "features.csv"), dtype={"course_id": str})
    ds = compute_deltas(
        {f: _by_fraction(df, f, [feature]) for f in DELTA_FRACTIONS if (df["fraction"] == f).any()}, [feature]
    )
    return ds.ratio[feature]


def km_split(x: pd.Series, t, e, cutoff: float, label: str):
    """Two-group KM frame (low: x <= cutoff, high: x > cutoff) and log-rank row."""
    high = x.to_numpy() > cutoff
    frames = []
    for name, sel in (("low", ~high), ("high", high)):
        if sel.any():
            frames.append(km_estimate(t[sel], e[sel]).to_frame(name))
    lr = logrank_groups(t, e, ~high)
    row = {
        "analysis": label,
        "cutoff": cutoff,
        "n_low": int((~high).sum()),
        "n_high": int(high.sum()),
        "chi2": lr.chi2,
        "p_value": lr.p_value,
    }
    return pd.concat(frames, ignore_index=True), row


def stage_survive(cfg: PipelineConfig, out: Path) -> List[str]:
    if cfg.outcomes is None:
        raise MissingUpstreamArtifactError("no outcomes file configured")
    notes = []
    ratios = pd.read_csv(_require(out, "ratios.csv"), dtype={"course_id": str}).set_index("course_id")
    ratios.index.name = None
    ids, outcomes = _outcome_arrays(cfg, list(ratios.index))
    ratios = ratios.loc[ids]
    sc = cfg.survival

    usable = {}
    for ep, (t, e) in outcomes.items():
        if e.sum() == 0:
            notes.append(f"endpoint {ep} has no events; skipped")
        else:
            usable[ep] = (t, e)

    # univariate Cox per feature, BH within endpoint
    finite = ratios.columns[np.isfinite(ratios.to_numpy()).all(axis=0)]
    if len(finite) < ratios.shape[1]:
        notes.append("ratio columns with zero-baseline courses left out of survival models")
    X = ratios[list(finite)]
    if ratios.shape[1]:
        write_csv(univariate_screen(ratios, usable), out / "survival_univariate.csv")
        rows = []
        for ep, (t, e) in usable.items():
            if X.shape[1] < 2:
                notes.append(f"multivariable Cox for {ep} skipped: fewer than two features")
                continue
            res = multivariate_cox_with_rfe(X, t, e, min(sc.top_k, X.shape[1]), sc.rfe_response)
            tab = res.table4()
            tab.insert(0, "endpoint", ep)
            tab["converged"] = int(res.fit.converged)
            rows.append(tab)
            notes.extend(f"{ep}: {n}" for n in res.fit.notes)
        if rows:
            write_csv(pd.concat(rows, ignore_index=True), out / "survival_multivariate.csv")

    # skewness ratio analyses at the configured cutoffs
    skew = feature_ratio(out, SKEWNESS).loc[ids]
    ok = np.isfinite(skew.to_numpy())
    lr_rows, km_frames = [], []
    for ep, (t, e) in usable.items():
        for cut in sc.skewness_cutoffs:
            frame, row = km_split(skew[ok], t[ok], e[ok], cut, f"Skewness F5/F1 {ep}")
            row["endpoint"] = ep
            lr_rows.append(row)
            frame.insert(0, "cutoff", cut)
            frame.insert(0, "endpoint", ep)
            km_frames.append(frame)
    if lr_rows:
        write_csv(pd.DataFrame(lr_rows)[["endpoint", "analysis", "cutoff", "n_low", "n_high", "chi2", "p_value"]], out / "skewness_logrank.csv")
        write_csv(pd.concat(km_frames, ignore_index=True), out / "km_skewness.csv")

    ep = sc.cutpoint_endpoint
    if ep in usable:
        t, e = usable[ep]
        try:
            cp = cutpoint_search(skew[ok], t[ok], e[ok], sc.min_node, sc.alpha, sc.n_perm, sc.seed)
            _write_json(
                out / "cutpoint.json",
                {
                    "endpoint": ep,
                    "feature": SKEWNESS + " F5/F1",
                    "cutoff": cp.cutoff,
                    "group_sizes": list(cp.group_sizes),
                    "statistic": cp.statistic,
                    "z": cp.z,
                    "p_value": cp.p_value,
                    "significant": bool(cp.significant),
                    "n_perm": cp.n_perm,
                },
            )
        except DeltaRadError as exc:
            notes.append(f"cutpoint search skipped: {exc}")
        g = e[ok]
        if 0 < g.sum() < g.size:
            df = pd.read_csv(out / "features.csv", dtype={"course_id": str})
            base = _by_fraction(df, "F1", [SKEWNESS])[SKEWNESS].loc[skew[ok].index].to_numpy()
            res = ancova(skew[ok].to_numpy(), g, base[:, None] if "baseline" in sc.ancova_covariates else None)
            _write_json(
                out / "ancova.json",
                {
                    "response": SKEWNESS + " F5/F1",
                    "group": f"{ep} event",
                    "covariates": ["F1 " + SKEWNESS] if "baseline" in sc.ancova_covariates else [],
                    "F": res.F,
                    "p_value": res.p_value,
                    "group_effect": res.group_effect,
                    "df": [res.df_num, res.df_den],
                },
            )
    return notes


# ---------------------------------------------------------------- report

REPORT_INPUTS = ("correlation.csv", "delta_long.csv", "km_skewness.csv", "stability.csv", "features.csv")


def stage_report(cfg: PipelineConfig, out: Path) -> List[str]:
    if not any((out / n).exists() for n in REPORT_INPUTS):
        raise MissingUpstreamArtifactError(f"no pipeline artifacts in {out}")
    notes = []
    if (out / "correlation.csv").exists() and (out / "kept_features.json").exists():
        corr = pd.read_csv(out / "correlation.csv").set_index("feature")
        labels = [n.replace("original_", "") for n in corr.index]
        heatmap(corr.to_numpy(), labels, "Pearson correlation, stable F1 features").save(out / "correlation_heatmap.svg")
    if (out / "delta_long.csv").exists():
        dl = pd.read_csv(out / "delta_long.csv", dtype={"course_id": str})
        panels = {}
        for feat, grp in dl.groupby("feature", sort=False):
            traces = {}
            for cid, g in grp.groupby("course_id", sort=False):
                vals = dict(zip(g["fraction"], g["rel_change"]))
                traces[cid] = [1.0] + [1.0 + vals.get(f, np.nan) for f in DELTA_FRACTIONS[1:]]
            panels[feat] = traces
        if panels:
            small_multiples(panels, DELTA_FRACTIONS).save(out / "delta_trajectories.svg")
    if (out / "km_skewness.csv").exists():
        km = pd.read_csv(out / "km_skewness.csv")
        for (ep, cut), grp in km.groupby(["endpoint", "cutoff"], sort=False):
            curves = {
                f"{name} (n={int(g['at_risk'].iloc[0])})": (g["time"].to_numpy(), g["survival"].to_numpy())
                for name, g in grp.groupby("group", sort=False)
            }
            step_curves(curves, f"{ep}: Skewness F5/F1 split at {cut}").save(out / f"km_{ep}_{cut}.svg")
    return notes


# ---------------------------------------------------------------- driver

STAGE_FUNCS = {
    "extract": stage_extract,
    "stability": stage_stability,
    "prune": stage_prune,
    "delta": stage_delta,
    "survive": stage_survive,
    "report": stage_report,
}


def versions() -> Dict[str, str]:
    import scipy

    return {
        "deltarad": __version__,
        "numpy": np.__version__,
        "pandas": pd.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def write_metadata(cfg: PipelineConfig, out: Path, completed: List[str], failed: Optional[str] = None):
    assumptions = []
    path = out / "assumptions.json"
    if path.exists():
        doc = json.loads(path.read_text())
        for st in STAGES:
            assumptions.extend(f"{st}: {n}" for n in doc.get(st, []))
    artifacts = {}
    for p in sorted(out.iterdir()):
        if p.is_file() and p.name != "run_metadata.json":
            artifacts[p.name] = hashlib.sha256(p.read_bytes()).hexdigest()
    # content hashes rather than paths, so relocated cohorts give identical metadata
    inputs = {}
    for key in ("manifest", "outcomes"):
        src = getattr(cfg, key)
        if src is not None and Path(src).exists():
            inputs[key] = hashlib.sha256(Path(src).read_bytes()).hexdigest()
    meta = {
        "config_hash": cfg.analysis_hash(),
        "config": {k: v for k, v in cfg.to_dict().items() if k not in ("manifest", "outcomes", "output_dir")},
        "inputs": inputs,
        "assumptions": assumptions,
        "versions": versions(),
        "stages_completed": completed,
        "artifacts": artifacts,
    }
    if failed:
        meta["failed_stage"] = failed
    _write_json(out / "run_metadata.json", meta)


def run_stage(stage: str, cfg: PipelineConfig, out: Optional[Path] = None, threads: int = 1) -> Path:
    out = Path(out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    func = STAGE_FUNCS[stage]
    try:
        notes = func(cfg, out, threads) if stage == "extract" else func(cfg, out)
    except DeltaRadError as exc:
        raise StageError(stage, exc) from exc
    _record(out, stage, notes)
    return out


def run_pipeline(cfg: PipelineConfig, out: Optional[Path] = None, threads: int = 1, stages=STAGES) -> Path:
    """Run the stages in order; on failure, completed artifacts stay on disk
    and ``run_metadata.json`` names the failed stage."""
    out = Path(out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    done: List[str] = []
    for st in stages:
        try:
            run_stage(st, cfg, out, threads)
        except StageError:
            write_metadata(cfg, out, done, failed=st)
            raise
        done.append(st)
    write_metadata(cfg, out, done)
    return out
