"""Cohort manifest (JSON) and outcome table (CSV) loaders."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

from .errors import (
    DuplicateCourseError,
    MissingF1Error,
    NegativeTimeError,
    NonBinaryEventError,
    ParseError,
    SchemaError,
)

SCHEMA_VERSION = "1"
FRACTION_LABELS = ("SIM", "F1", "F2", "F3", "F4", "F5")
DELTA_FRACTIONS = ("F1", "F2", "F3", "F4", "F5")
ENDPOINTS = ("OS", "PFS", "LFFS", "iLFFS")
OUTCOME_COLUMNS = (
    "course_id",
    "os_time",
    "os_event",
    "pfs_time",
    "pfs_event",
    "lffs_time",
    "lffs_event",
    "ilffs_time",
    "ilffs_event",
)


@dataclass(frozen=True)
class FractionPaths:
    image: Path
    gtv: Path
    heart: Optional[Path] = None


@dataclass(frozen=True)
class Course:
    course_id: str
    patient_id: str
    fractions: Dict[str, FractionPaths]

    def has(self, *labels: str) -> bool:
        return all(lab in self.fractions for lab in labels)


@dataclass(frozen=True)
class CohortManifest:
    courses: List[Course]
    root: Path = Path(".")

    def course(self, course_id: str) -> Course:
        for c in self.courses:
            if c.course_id == course_id:
                return c
        raise KeyError(course_id)

    @property
    def course_ids(self) -> List[str]:
        return [c.course_id for c in self.courses]


def parse_manifest(doc: dict, root: Union[str, Path] = ".", validate_paths: bool = False) -> CohortManifest:
    root = Path(root)
    if not isinstance(doc, dict):
        raise SchemaError("manifest must be a JSON object")
    version = doc.get("schema_version")
    if str(version) != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {version!r}, expected '{SCHEMA_VERSION}'")
    raw_courses = doc.get("courses")
    if not isinstance(raw_courses, list):
        raise SchemaError("'courses' must be a list")

    seen = set()
    courses = []
    for n, rc in enumerate(raw_courses):
        if not isinstance(rc, dict):
            raise SchemaError(f"course #{n} is not an object")
        for key in ("course_id", "patient_id", "fractions"):
            if key not in rc:
                raise SchemaError(f"course #{n} is missing '{key}'")
        cid = str(rc["course_id"])
        if cid in seen:
            raise DuplicateCourseError(f"course_id {cid!r} appears more than once")
        seen.add(cid)
        raw_fr = rc["fractions"]
        if not isinstance(raw_fr, dict):
            raise SchemaError(f"course {cid}: 'fractions' must be an object")
        fractions = {}
        # keep the file's order; labels are validated, never re-sorted
        for label, entry in raw_fr.items():
            if label not in FRACTION_LABELS:
                raise SchemaError(f"course {cid}: unknown fraction label {label!r}")
            if not isinstance(entry, dict) or "image" not in entry or "gtv" not in entry:
                raise SchemaError(f"course {cid} {label}: needs 'image' and 'gtv'")
            heart = entry.get("heart")
            fp = FractionPaths(
                image=root / entry["image"],
                gtv=root / entry["gtv"],
                heart=None if heart is None else root / heart,
            )
            if validate_paths:
                for p in (fp.image, fp.gtv, fp.heart):
                    if p is not None and not p.exists():
                        raise SchemaError(f"course {cid} {label}: file not found: {p}")
            fractions[label] = fp
        if "F1" not in fractions:
            raise MissingF1Error(f"course {cid} has no F1 fraction")
        courses.append(Course(cid, str(rc["patient_id"]), fractions))
    return CohortManifest(courses, root)


def load_manifest(path: Union[str, Path], validate_paths: bool = False) -> CohortManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise SchemaError(f"manifest not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from None
    return parse_manifest(doc, path.parent, validate_paths)


def manifest_to_dict(manifest: CohortManifest) -> dict:
    root = manifest.root

    def rel(p):
        try:
            return Path(p).relative_to(root).as_posix()
        except ValueError:
            return str(p)

    return {
        "schema_version": SCHEMA_VERSION,
        "courses": [
            {
                "course_id": c.course_id,
                "patient_id": c.patient_id,
                "fractions": {
                    lab: {
                        "image": rel(fp.image),
                        "gtv": rel(fp.gtv),
                        "heart": None if fp.heart is None else rel(fp.heart),
                    }
                    for lab, fp in c.fractions.items()
                },
            }
            for c in manifest.courses
        ],
    }


@dataclass(frozen=True)
class OutcomeRow:
    course_id: str
    times: Dict[str, float] = field(default_factory=dict)
    events: Dict[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class OutcomeTable:
    rows: List[OutcomeRow]

    def __len__(self):
        return len(self.rows)

    def by_course(self) -> Dict[str, OutcomeRow]:
        return {r.course_id: r for r in self.rows}

    def endpoint(self, endpoint: str, course_ids=None):
        """Return ``(course_ids, times, events)`` for one endpoint."""
        rows = self.rows
        if course_ids is not None:
            index = self.by_course()
            rows = [index[c] for c in course_ids]
        return (
            [r.course_id for r in rows],
            [r.times[endpoint] for r in rows],
            [r.events[endpoint] for r in rows],
        )


def _endpoint_key(column: str) -> str:
    prefix = column.split("_", 1)[0]
    return {"os": "OS", "pfs": "PFS", "lffs": "LFFS", "ilffs": "iLFFS"}[prefix]


def parse_outcomes(text: str) -> OutcomeTable:
    lines = text.splitlines()
    # optional "# schema_version=1" preamble
    while lines and lines[0].startswith("#"):
        meta = lines.pop(0).lstrip("#").strip().replace(":", "=")
        if meta.startswith("schema_version"):
            version = meta.split("=", 1)[-1].strip()
            if version != SCHEMA_VERSION:
                raise ParseError(f"unsupported outcomes schema_version {version!r}")
    if not lines:
        raise ParseError("outcomes file has no header row")
    reader = csv.reader(io.StringIO("\n".join(lines)))
    header = [h.strip() for h in next(reader)]
    if tuple(header) != OUTCOME_COLUMNS:
        raise ParseError(f"outcome columns must be exactly {','.join(OUTCOME_COLUMNS)}; got {','.join(header)}")

    rows = []
    for lineno, rec in enumerate(reader, start=2):
        if not rec or all(not f.strip() for f in rec):
            continue
        if len(rec) != len(OUTCOME_COLUMNS):
            raise ParseError(f"line {lineno}: expected {len(OUTCOME_COLUMNS)} fields, got {len(rec)}")
        cid = rec[0].strip()
        times, events = {}, {}
        for col, raw in zip(OUTCOME_COLUMNS[1:], rec[1:]):
            key = _endpoint_key(col)
            try:
                val = float(raw)
            except ValueError:
                raise ParseError(f"line {lineno}: {col}={raw!r} is not a number") from None
            if col.endswith("_time"):
                if not val >= 0 or val == float("inf"):
                    raise NegativeTimeError(f"line {lineno}: {col}={raw} must be a finite time >= 0")
                times[key] = val
            else:
                if val not in (0.0, 1.0):
                    raise NonBinaryEventError(f"line {lineno}: {col}={raw} must be 0 or 1")
                events[key] = int(val)
        rows.append(OutcomeRow(cid, times, events))
    ids = [r.course_id for r in rows]
    if len(set(ids)) != len(ids):
        raise ParseError("duplicate course_id in outcomes")
    return OutcomeTable(rows)


def load_outcomes(path: Union[str, Path]) -> OutcomeTable:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ParseError(f"outcomes file not found: {path}") from None
    return parse_outcomes(text)


def format_outcomes(table: OutcomeTable) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(OUTCOME_COLUMNS)
    for r in table.rows:
        row = [r.course_id]
        for ep in ENDPOINTS:
            row += [repr(float(r.times[ep])), str(int(r.events[ep]))]
        writer.writerow(row)
    return out.getvalue()


def join_outcomes(manifest: CohortManifest, outcomes: OutcomeTable) -> OutcomeTable:
    """Restrict ``outcomes`` to manifest courses, in manifest order."""
    known = set(manifest.course_ids)
    unknown = [r.course_id for r in outcomes.rows if r.course_id not in known]
    if unknown:
        raise ParseError(f"outcome rows reference unknown courses: {unknown}")
    index = outcomes.by_course()
    return OutcomeTable([index[c] for c in manifest.course_ids if c in index])
