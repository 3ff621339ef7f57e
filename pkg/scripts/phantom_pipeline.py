"""Generate a synthetic cohort and run every pipeline stage on it.

    python scripts/phantom_pipeline.py --seed 7 --courses 20 --out runs/ph7
"""

import argparse
import sys
import time
from pathlib import Path

from deltarad.cli import main as cli


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--courses", type=int, default=20)
    ap.add_argument("--out", type=Path, default=Path("runs/phantom"))
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args(argv)

    t0 = time.perf_counter()
    rc = cli(["phantom", "--seed", str(args.seed), "--courses", str(args.courses), "--out", str(args.out)])
    if rc:
        return rc
    rc = cli(["run", "--config", str(args.out / "pipeline.json"), "--threads", str(args.threads)])
    print(f"finished in {time.perf_counter() - t0:.1f} s, artifacts in {args.out / 'results'}")
    return rc


if __name__ == "__main__":
    sys.exit(main())
