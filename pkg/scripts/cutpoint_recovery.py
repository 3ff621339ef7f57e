"""How often the maximally selected log-rank search finds a planted threshold."""

import argparse
import math
import sys

import numpy as np
import pandas as pd

from deltarad.phantom import SKEWNESS, PhantomSpec, SurvivalModel, ThresholdEffect, generate_survival
from deltarad.survival import cutpoint_search


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cutoff", type=float, default=0.95)
    ap.add_argument("--hr", type=float, default=5.0)
    ap.add_argument("--n", type=int, default=120)
    ap.add_argument("--reps", type=int, default=100)
    ap.add_argument("--n-perm", type=int, default=1000)
    ap.add_argument("--window", type=float, default=0.02, help="accepted |found - planted|")
    args = ap.parse_args(argv)

    hits, found = 0, []
    for s in range(args.reps):
        rng = np.random.default_rng(s)
        x = rng.uniform(args.cutoff - 0.1, args.cutoff + 0.1, args.n)
        X = pd.DataFrame({SKEWNESS: x}, index=[f"C{i}" for i in range(args.n)])
        eff = ThresholdEffect(SKEWNESS, args.cutoff, math.log(args.hr))
        spec = PhantomSpec(seed=s, survival=SurvivalModel(thresholds=(eff,), endpoints=("LFFS",)))
        out = generate_survival(spec, X)
        t = np.array([r.times["LFFS"] for r in out.rows])
        e = np.array([r.events["LFFS"] for r in out.rows])
        r = cutpoint_search(x, t, e, n_perm=args.n_perm, seed=s)
        found.append(r.cutoff)
        hits += abs(r.cutoff - args.cutoff) <= args.window and r.p_value < 0.01
    found = np.asarray(found)
    print(f"recovered {hits}/{args.reps} (window {args.window}, p < 0.01)")
    print(f"found cutoffs: median {np.median(found):.4f}, IQR {np.percentile(found, 25):.4f}-{np.percentile(found, 75):.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
