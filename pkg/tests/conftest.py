import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from deltarad.config import PipelineConfig  # noqa: E402
from deltarad.pipeline import run_pipeline  # noqa: E402
from deltarad.phantom import HeartModel, LesionModel, PhantomSpec, write_phantom_cohort  # noqa: E402
from deltarad.volume import MaskROI, VolumeGrid  # noqa: E402

DATA = Path(__file__).parent / "data"

# ---------------------------------------------------------------- acceptance summary

_AC_RESULTS = {}


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("acceptance")
    if mark is None or not mark.args:
        return
    ac = mark.args[0]
    if call.when == "call" or (call.when == "setup" and call.excinfo is not None):
        ok = call.excinfo is None
        prev = _AC_RESULTS.get(ac, (True, ""))
        _AC_RESULTS[ac] = (prev[0] and ok, mark.kwargs.get("title", prev[1]))


def pytest_terminal_summary(terminalreporter):
    if not _AC_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for ac in sorted(_AC_RESULTS, key=lambda s: int(s[2:])):
        ok, title = _AC_RESULTS[ac]
        terminalreporter.write_line(f"{ac:<5} {'PASS' if ok else 'FAIL'}  {title}")


# ---------------------------------------------------------------- helpers


def make_volume(data, spacing=(1.0, 1.0, 1.0)):
    return VolumeGrid(np.asarray(data, dtype=np.float64), spacing, (0.0, 0.0, 0.0))


def make_mask(vox, spacing=(1.0, 1.0, 1.0), label="GTV"):
    return MaskROI(np.asarray(vox, dtype=bool), spacing, (0.0, 0.0, 0.0), label)


def small_spec(seed=0, n=6, **lesion):
    """A fast phantom: small grid, small lesion."""
    les = LesionModel(radii_mm=(8.0, 7.0, 6.0), **lesion)
    return PhantomSpec(
        seed=seed,
        n_courses=n,
        dims=(40, 36, 32),
        spacing=(1.5, 1.5, 2.0),
        lesion=les,
        heart=HeartModel(radii_mm=(7.0, 7.0, 7.0)),
    )


@pytest.fixture(scope="session")
def small_cohort(tmp_path_factory):
    root = tmp_path_factory.mktemp("cohort")
    write_phantom_cohort(small_spec(seed=3, n=8), root)
    return root


def cohort_config(root, out, **survival):
    doc = {
        "manifest": str(root / "manifest.json"),
        "outcomes": str(root / "outcomes.csv"),
        "output_dir": str(out),
        "survival": {"n_perm": 200, **survival},
    }
    return PipelineConfig.from_dict(doc)


@pytest.fixture(scope="session")
def small_run(small_cohort, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = cohort_config(small_cohort, out)
    run_pipeline(cfg)
    return cfg, out
