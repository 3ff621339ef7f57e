"""Command-line entry point: ``deltarad <stage> [--config pipeline.json] ...``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from .config import PipelineConfig, load_config, save_config
from .errors import ConfigError, DeltaRadError, StageError
from .pipeline import STAGES, _outcome_arrays, feature_ratio, km_split, run_pipeline, run_stage
from .tables import write_csv

log = logging.getLogger("deltarad")

# flag -> dotted config key
OVERRIDES = {
    "bin_count": "preprocess.bin_count",
    "stability_threshold": "stability.threshold",
    "stability_rule": "stability.rule",
    "collinearity_threshold": "collinearity.threshold",
    "collinearity_mode": "collinearity.mode",
    "top_k": "survival.top_k",
    "n_perm": "survival.n_perm",
    "seed": "survival.seed",
}


def _normalize_flag(s: str):
    table = {"true": True, "false": False, "auto": "auto"}
    if s.lower() not in table:
        raise argparse.ArgumentTypeError("expected true, false or auto")
    return table[s.lower()]


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="pipeline JSON config (default: built-in defaults)")
    p.add_argument("--out", type=Path, help="output directory (overrides config output_dir)")
    p.add_argument("--manifest", help="cohort manifest (overrides config)")
    p.add_argument("--outcomes", help="outcomes CSV (overrides config)")
    p.add_argument("--threads", type=int, default=1, help="extraction worker processes")
    p.add_argument("--normalize", type=_normalize_flag)
    p.add_argument("--bin-count", type=int)
    p.add_argument("--stability-threshold", type=float)
    p.add_argument("--stability-rule", choices=("all", "median"))
    p.add_argument("--collinearity-threshold", type=float)
    p.add_argument("--collinearity-mode", choices=("literal", "recompute"))
    p.add_argument("--top-k", type=int)
    p.add_argument("--n-perm", type=int)
    p.add_argument("--seed", type=int, help="survival permutation seed")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="deltarad", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for st in STAGES:
        p = sub.add_parser(st, help=f"run the {st} stage")
        _common(p)
        if st == "survive":
            p.add_argument("--endpoint", help="with --feature/--cutoff: two-group KM split only")
            p.add_argument("--feature", help="feature (short or qualified name) whose F5/F1 ratio is split")
            p.add_argument("--cutoff", type=float)
    p = sub.add_parser("run", help="run every stage in order")
    _common(p)
    p = sub.add_parser("phantom", help="write a synthetic cohort and a matching pipeline.json")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--courses", type=int, default=20)
    p.add_argument("--out", type=Path, default=Path("phantom"))
    p.add_argument("--spec", type=Path, help="PhantomSpec JSON (seed/courses flags still apply)")
    p.add_argument("-v", "--verbose", action="store_true")
    return ap


def resolve_config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    kw = {OVERRIDES[k]: getattr(args, k) for k in OVERRIDES}
    kw["preprocess.normalize"] = args.normalize
    kw["manifest"] = args.manifest
    kw["outcomes"] = args.outcomes
    kw["output_dir"] = None if args.out is None else str(args.out)
    try:
        return cfg.with_overrides(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def cmd_phantom(args) -> int:
    from .phantom import PhantomSpec, write_phantom_cohort

    doc = json.loads(args.spec.read_text()) if args.spec else {}
    doc.update(seed=args.seed, n_courses=args.courses)
    spec = PhantomSpec.from_dict(doc)
    manifest = write_phantom_cohort(spec, args.out)
    cfg = PipelineConfig(manifest="manifest.json", outcomes="outcomes.csv", output_dir="results")
    save_config(cfg, args.out / "pipeline.json")
    print(f"wrote {spec.n_courses} courses to {args.out} ({manifest.name}, pipeline.json)")
    return 0


def cmd_survive_split(cfg: PipelineConfig, args) -> int:
    from .features import resolve

    if not (args.endpoint and args.feature and args.cutoff is not None):
        raise ConfigError("--endpoint, --feature and --cutoff must be given together")
    if args.endpoint not in cfg.survival.endpoints:
        raise ConfigError(f"unknown endpoint {args.endpoint!r}")
    try:
        name = resolve(args.feature)
    except KeyError:
        raise ConfigError(f"unknown or ambiguous feature {args.feature!r}") from None
    out = Path(cfg.output_dir)
    x = feature_ratio(out, name)
    ids, outcomes = _outcome_arrays(cfg, list(x.index))
    x = x.loc[ids]
    t, e = outcomes[args.endpoint]
    ok = np.isfinite(x.to_numpy())
    frame, row = km_split(x[ok], t[ok], e[ok], args.cutoff, f"{name} F5/F1")
    short = name.rsplit("_", 1)[-1]
    stem = f"km_{args.endpoint}_{short}_{args.cutoff}"
    write_csv(frame, out / f"{stem}.csv")
    write_csv(pd.DataFrame([row]), out / f"{stem}_logrank.csv")
    print(f"{args.endpoint} {short} F5/F1 <= {args.cutoff}: n={row['n_low']}/{row['n_high']}, log-rank p={row['p_value']:.4g}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "phantom":
            return cmd_phantom(args)
        cfg = resolve_config(args)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        if args.command == "survive" and (args.endpoint or args.feature or args.cutoff is not None):
            return cmd_survive_split(cfg, args)
        if args.command == "run":
            out = run_pipeline(cfg, threads=args.threads)
        else:
            out = run_stage(args.command, cfg, threads=args.threads)
        print(f"{args.command}: artifacts in {out}")
        return 0
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except DeltaRadError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
