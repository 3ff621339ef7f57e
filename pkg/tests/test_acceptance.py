"""Exit criteria AC1-AC10. Each test carries an ``acceptance`` marker; the
terminal summary prints one PASS/FAIL line per criterion."""

import json
import math
import shutil
import time

import numpy as np
import pandas as pd
import pytest

import oracles
from deltarad.cli import main
from deltarad.config import load_config
from deltarad.delta import compute_deltas, trend_summary
from deltarad.features import extract_all
from deltarad.phantom import PhantomSpec, SurvivalModel, ThresholdEffect, generate_survival
from deltarad.pipeline import run_pipeline, run_stage
from deltarad.preprocess import PreprocessConfig
from deltarad.stability import lin_ccc, read_stability_csv, stability_gate
from deltarad.survival import bh_adjust, cox_fit, cutpoint_search, km_estimate, logrank_groups

from conftest import DATA, cohort_config, make_mask, make_volume
from test_features import random_case

ac = pytest.mark.acceptance
SKEW = "original_firstorder_Skewness"
MESH = {"MeshVolume", "SurfaceArea", "Sphericity", "SurfaceVolumeRatio"}


def outcome_arrays(tab, ep):
    return (
        np.array([r.times[ep] for r in tab.rows]),
        np.array([r.events[ep] for r in tab.rows]),
    )


# ---------------------------------------------------------------- AC1


@ac("AC1", title="107 features match brute-force oracles on 200 random volumes")
def test_ac1_feature_oracles():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    done = 0
    bad = []
    while done < 200:
        img, m, sp, ng = random_case(rng)
        ref = oracles.all_features(img, m, sp, ng)
        if ref is None:  # no neighbour pairs at all; texture undefined
            continue
        fv = extract_all(make_volume(img, sp), make_mask(m, sp), PreprocessConfig(normalize=False, bin_count=ng))
        assert len(fv.values) == 107
        for k, v in ref.items():
            tol = 1e-6 if k.rsplit("_", 1)[-1] in MESH else 1e-9
            if not math.isclose(fv.values[k], v, rel_tol=tol, abs_tol=1e-12):
                bad.append((done, k, fv.values[k], v))
        done += 1
    elapsed = time.perf_counter() - t0
    assert not bad, bad[:5]
    assert elapsed < 60, elapsed


# ---------------------------------------------------------------- AC2


@ac("AC2", title="stability gate reproduces published flags for Elongation, Idmn, 90Percentile")
def test_ac2_published_stability_rows():
    pub = read_stability_csv(DATA / "published_stability.csv").table
    rows = ["original_shape_Elongation", "original_glcm_Idmn", "original_firstorder_90Percentile"]
    spatial = [c for c in pub.columns if c.startswith("spatial_ccc_")]
    rep = stability_gate(pub.loc[rows, "temporal_ccc"], pub.loc[rows, spatial])
    assert rep.table.loc[rows, "stable"].tolist() == [1, 0, 1]
    assert pub.loc[rows, "stable"].tolist() == [1, 0, 1]


# ---------------------------------------------------------------- AC3


@ac("AC3", title="Lin CCC hand value and |CCC| <= |Pearson| on 1e5 pairs")
def test_ac3_ccc():
    assert abs(lin_ccc([1, 2, 3], [2, 3, 4]) - 4 / 7) <= 1e-12
    rng = np.random.default_rng(3)
    worst = -np.inf
    for _ in range(100_000):
        n = int(rng.integers(3, 12))
        x = rng.normal(size=n)
        y = rng.uniform(-2, 2) * x + rng.normal(scale=rng.uniform(0.01, 2), size=n) + rng.normal()
        r = np.corrcoef(x, y)[0, 1]
        worst = max(worst, abs(lin_ccc(x, y)) - abs(r))
    assert worst <= 1e-12, worst


# ---------------------------------------------------------------- AC4


@ac("AC4", title="Cox recovers beta=0.7 (n=500, 20% censoring) with CI coverage >= 90/100")
def test_ac4_cox_recovery():
    t0 = time.perf_counter()
    within = covered = 0
    for s in range(100):
        rng = np.random.default_rng(s)
        X = pd.DataFrame({"x": rng.normal(size=500)}, index=[f"C{i}" for i in range(500)])
        spec = PhantomSpec(seed=s, survival=SurvivalModel(betas={"x": 0.7}, censoring_rate=0.2))
        t, e = outcome_arrays(generate_survival(spec, X), "OS")
        assert abs((1 - e.mean()) - 0.2) <= 0.05
        fit = cox_fit(X["x"].to_numpy(), t, e)
        within += abs(fit.beta[0] - 0.7) <= 0.15
        lo, hi = fit.beta[0] - 1.96 * fit.se[0], fit.beta[0] + 1.96 * fit.se[0]
        covered += lo <= 0.7 <= hi
    assert within >= 90 and covered >= 90, (within, covered)
    assert time.perf_counter() - t0 < 30


# ---------------------------------------------------------------- AC5


@ac("AC5", title="KM hand case exact; log-rank equals hypergeometric oracle on 100 cohorts")
def test_ac5_km_logrank():
    km = km_estimate([5, 10, 15], [1, 0, 1])
    assert km.at(5)[()] == 2 / 3 and km.at(10)[()] == 2 / 3 and km.at(15)[()] == 0.0
    assert km.at(0)[()] == 1.0
    rng = np.random.default_rng(5)
    checked = 0
    while checked < 100:
        n = int(rng.integers(4, 40))
        t = rng.integers(1, 15, n).astype(float)
        e = rng.integers(0, 2, n)
        g = rng.random(n) < 0.5
        if e.sum() == 0:
            continue
        O, E, V = oracles.logrank_oracle(t.tolist(), e.tolist(), g.tolist())
        r = logrank_groups(t, e, g)
        assert abs(r.observed_a - O) <= 1e-10
        assert abs(r.expected_a - E) <= 1e-10
        assert abs(r.variance - V) <= 1e-10
        checked += 1


# ---------------------------------------------------------------- AC6


@ac("AC6", title="BH hand case, monotonicity and idempotence on 1e4 vectors")
def test_ac6_bh():
    np.testing.assert_allclose(bh_adjust([0.01, 0.02, 0.03, 0.04]), [0.04] * 4, atol=1e-15)
    rng = np.random.default_rng(6)
    not_monotone = not_idempotent = 0
    for _ in range(10_000):
        p = rng.random(int(rng.integers(1, 30)))
        q = bh_adjust(p)
        order = np.argsort(p, kind="stable")
        if np.any(q < p) or np.any(np.diff(q[order]) < 0):
            not_monotone += 1
        if not np.allclose(bh_adjust(q), q, rtol=0, atol=1e-15):
            not_idempotent += 1
    assert not_monotone == 0
    assert not_idempotent == 0, f"bh_adjust(bh_adjust(p)) != bh_adjust(p) for {not_idempotent} of 10000 vectors"


# ---------------------------------------------------------------- AC7


@ac("AC7", title="cutpoint recovers a planted 0.95 threshold (HR 5, n=120) in >= 95/100 seeds")
def test_ac7_cutpoint_recovery():
    hits = 0
    for s in range(100):
        rng = np.random.default_rng(s)
        X = pd.DataFrame({SKEW: rng.uniform(0.85, 1.05, 120)}, index=[f"C{i}" for i in range(120)])
        spec = PhantomSpec(
            seed=s,
            survival=SurvivalModel(
                thresholds=(ThresholdEffect(SKEW, 0.95, math.log(5.0)),), censoring_rate=0.2, endpoints=("LFFS",)
            ),
        )
        t, e = outcome_arrays(generate_survival(spec, X), "LFFS")
        r = cutpoint_search(X[SKEW].to_numpy(), t, e, n_perm=1000, seed=s)
        hits += abs(r.cutoff - 0.95) <= 0.02 and r.p_value < 0.01
    assert hits >= 95, hits


# ---------------------------------------------------------------- AC8


@ac("AC8", title="pipeline artifacts byte-identical for threads 1 and 8")
def test_ac8_determinism(small_cohort, small_run, tmp_path):
    _, first = small_run
    run_pipeline(cohort_config(small_cohort, tmp_path), threads=8)
    a = sorted(p.name for p in first.iterdir())
    assert a == sorted(p.name for p in tmp_path.iterdir())
    for name in a:
        assert (first / name).read_bytes() == (tmp_path / name).read_bytes(), name


# ---------------------------------------------------------------- AC10 cohort (shared with AC9)


@pytest.fixture(scope="module")
def phantom20(tmp_path_factory):
    root = tmp_path_factory.mktemp("phantom20")
    t0 = time.perf_counter()
    assert main(["phantom", "--seed", "7", "--courses", "20", "--out", str(root)]) == 0
    assert main(["run", "--config", str(root / "pipeline.json")]) == 0
    return root, time.perf_counter() - t0


def frames_close(a: pd.DataFrame, b: pd.DataFrame):
    assert list(a.columns) == list(b.columns) and a.shape == b.shape
    for c in a.columns:
        if pd.api.types.is_numeric_dtype(a[c]):
            np.testing.assert_allclose(a[c].to_numpy(float), b[c].to_numpy(float), rtol=1e-9, atol=1e-12, err_msg=c)
        else:
            assert a[c].tolist() == b[c].tolist(), c


def json_close(a, b):
    if isinstance(a, dict):
        assert a.keys() == b.keys()
        for k in a:
            json_close(a[k], b[k])
    elif isinstance(a, list):
        assert len(a) == len(b)
        for x, y in zip(a, b):
            json_close(x, y)
    elif isinstance(a, float):
        assert math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-12)
    else:
        assert a == b


# ---------------------------------------------------------------- AC9


@ac("AC9", title="scaling raw feature values by 3.7 leaves deltas, trend tables and survival statistics unchanged")
def test_ac9_delta_invariance_tables():
    rng = np.random.default_rng(9)
    feats = ["a", "b", "c"]
    mats = {
        f: pd.DataFrame(rng.uniform(0.5, 2.0, size=(15, 3)), index=[f"C{i}" for i in range(15)], columns=feats)
        for f in ("F1", "F2", "F3", "F4", "F5")
    }
    scaled = {f: m.assign(b=m["b"] * 3.7) for f, m in mats.items()}
    d0, d1 = compute_deltas(mats), compute_deltas(scaled)
    for frac in d0.rel:
        frames_close(d0.rel[frac], d1.rel[frac])
    frames_close(d0.ratio, d1.ratio)
    t0, t1 = trend_summary(d0), trend_summary(d1)
    for name in ("abs_change", "abs_change_text", "direction", "consistency", "signed_median"):
        frames_close(getattr(t0, name), getattr(t1, name))


@ac("AC9", title="scaling raw feature values by 3.7 leaves deltas, trend tables and survival statistics unchanged")
def test_ac9_delta_invariance_pipeline(phantom20, tmp_path):
    root, _ = phantom20
    res = root / "results"
    feats = pd.read_csv(res / "features.csv", dtype={"course_id": str})
    cols = feats.columns[2:]
    feats[cols] = feats[cols] * 3.7
    feats.to_csv(tmp_path / "features.csv", index=False, float_format="%.17g")
    shutil.copy(res / "kept_features.json", tmp_path / "kept_features.json")
    cfg = load_config(root / "pipeline.json")
    for stage in ("delta", "survive"):
        run_stage(stage, cfg, tmp_path)
    compared = 0
    for p in sorted(tmp_path.iterdir()):
        if p.name in ("features.csv", "kept_features.json", "assumptions.json"):
            continue
        if p.suffix == ".csv":
            frames_close(pd.read_csv(res / p.name), pd.read_csv(p))
        elif p.suffix == ".json":
            json_close(json.loads((res / p.name).read_text()), json.loads(p.read_text()))
        compared += 1
    assert compared >= 8
    assert (tmp_path / "survival_univariate.csv").exists() and (tmp_path / "skewness_logrank.csv").exists()


# ---------------------------------------------------------------- AC10


@ac("AC10", title="extraction of a 64^3 volume with a 20^3 mask < 2 s; 20-course pipeline < 5 min")
def test_ac10_extraction_speed():
    rng = np.random.default_rng(10)
    img = rng.normal(100, 20, (64, 64, 64))
    m = np.zeros((64, 64, 64), bool)
    m[22:42, 22:42, 22:42] = True
    t0 = time.perf_counter()
    fv = extract_all(make_volume(img), make_mask(m))
    assert time.perf_counter() - t0 < 2.0
    assert len(fv.values) == 107


@ac("AC10", title="extraction of a 64^3 volume with a 20^3 mask < 2 s; 20-course pipeline < 5 min")
def test_ac10_pipeline_speed(phantom20):
    root, elapsed = phantom20
    assert elapsed < 300, elapsed
    res = root / "results"
    feats = pd.read_csv(res / "features.csv")
    assert feats.shape == (20 * 6, 2 + 107)
    assert len(pd.read_csv(res / "stability.csv")) == 107
    meta = json.loads((res / "run_metadata.json").read_text())
    assert meta["stages_completed"] == ["extract", "stability", "prune", "delta", "survive", "report"]
