import json
import shutil

import pandas as pd
import pytest

from deltarad.cli import build_parser, main


def copy_run(small_run, tmp_path):
    cfg, out = small_run
    dst = tmp_path / "out"
    shutil.copytree(out, dst)
    return cfg, dst


def cli_args(cfg, out, *extra):
    return ["--manifest", cfg.manifest, "--outcomes", cfg.outcomes, "--out", str(out), *extra]


def test_survive_split(small_run, tmp_path, capsys):
    cfg, out = copy_run(small_run, tmp_path)
    rc = main(["survive", *cli_args(cfg, out), "--endpoint", "LFFS", "--feature", "Skewness", "--cutoff", "0.951"])
    assert rc == 0
    km = pd.read_csv(out / "km_LFFS_Skewness_0.951.csv")
    assert set(km["group"]) <= {"low", "high"} and (km["survival"].between(0, 1)).all()
    lr = pd.read_csv(out / "km_LFFS_Skewness_0.951_logrank.csv")
    assert lr.loc[0, "n_low"] + lr.loc[0, "n_high"] == 8
    assert "log-rank p=" in capsys.readouterr().out


def test_survive_split_needs_all_flags(small_run, tmp_path):
    cfg, out = copy_run(small_run, tmp_path)
    assert main(["survive", *cli_args(cfg, out), "--endpoint", "LFFS"]) == 2
    assert main(["survive", *cli_args(cfg, out), "--endpoint", "DFS", "--feature", "Skewness", "--cutoff", "1"]) == 2
    assert main(["survive", *cli_args(cfg, out), "--endpoint", "OS", "--feature", "NoSuch", "--cutoff", "1"]) == 2


def test_report_on_empty_dir_exits_3(tmp_path, capsys):
    assert main(["report", "--out", str(tmp_path)]) == 3
    assert "MissingUpstreamArtifact" in capsys.readouterr().err


def test_missing_config_exits_2(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.json")]) == 2


def test_bad_threads_exits_2(tmp_path):
    assert main(["extract", "--threads", "0", "--out", str(tmp_path)]) == 2


def test_bad_flag_value_is_usage_error():
    with pytest.raises(SystemExit) as ei:
        build_parser().parse_args(["run", "--normalize", "maybe"])
    assert ei.value.code == 2


def test_override_out_of_range_exits_2(tmp_path):
    assert main(["stability", "--out", str(tmp_path), "--stability-threshold", "1.5"]) == 2


def test_report_regenerates_svgs(small_run, tmp_path):
    cfg, out = copy_run(small_run, tmp_path)
    for p in out.glob("*.svg"):
        p.unlink()
    assert main(["report", *cli_args(cfg, out)]) == 0
    svgs = sorted(p.name for p in out.glob("*.svg"))
    assert "correlation_heatmap.svg" in svgs and "delta_trajectories.svg" in svgs
    assert (out / "delta_trajectories.svg").read_text().startswith("<svg")


def test_phantom_extract_stability(tmp_path):
    spec = {
        "dims": [40, 36, 32],
        "lesion": {"radii_mm": [8.0, 7.0, 6.0]},
        "heart": {"radii_mm": [7.0, 7.0, 7.0]},
    }
    (tmp_path / "spec.json").write_text(json.dumps(spec))
    root = tmp_path / "ph"
    assert main(["phantom", "--seed", "7", "--courses", "3", "--out", str(root), "--spec", str(tmp_path / "spec.json")]) == 0
    cfg = json.loads((root / "pipeline.json").read_text())
    assert cfg["manifest"] == "manifest.json" and cfg["output_dir"] == "results"
    conf = str(root / "pipeline.json")
    assert main(["extract", "--config", conf]) == 0
    assert main(["stability", "--config", conf]) == 0
    st = pd.read_csv(root / "results" / "stability.csv")
    assert len(st) == 107
    feats = pd.read_csv(root / "results" / "features.csv")
    assert len(feats) == 3 * 6


def test_override_reaches_config(tmp_path):
    from deltarad.cli import resolve_config

    args = build_parser().parse_args(
        ["run", "--top-k", "2", "--n-perm", "50", "--normalize", "auto", "--collinearity-mode", "recompute", "--out", str(tmp_path)]
    )
    cfg = resolve_config(args)
    assert cfg.survival.top_k == 2 and cfg.survival.n_perm == 50
    assert cfg.preprocess.normalize == "auto" and cfg.collinearity.mode == "recompute"
    assert cfg.output_dir == str(tmp_path)
