"""Weekly Score Ranking Point (SRP) features from activity logs.

Twelve features per student-week, each scored 0..10 and divided by 10:

* attendance: present 10, late 5, absent 0
* report: on_time 10, late 5, none 0, averaged over the week's assignments
  (0 when nothing was due)
* ten activity counts/times: decile of the student's rank among the students
  of the same course and week with nonzero activity; zero activity scores 0.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

ATTENDANCE_SCORES = {"present": 10, "late": 5, "absent": 0}
REPORT_SCORES = {"on_time": 10, "late": 5, "none": 0}
COUNT_FEATURES = (
    "course_accesses",
    "reading_time",
    "markers",
    "memos",
    "total_actions",
    "open",
    "next",
    "prev",
    "page_jump",
    "close",
)
FEATURES = ("attendance", "report") + COUNT_FEATURES
SRP_COLUMNS = tuple(f"srp_{f}" for f in FEATURES)
AT_RISK_GRADES = frozenset("CDF")
GRADES = ("A", "B", "C", "D", "F")
REPORT_SEP = ";"


class FeatureError(ValueError):
    pass


@dataclass
class ActivityRecord:
    student_id: str
    week: int
    attendance: str = "absent"
    reports: tuple[str, ...] = ()
    course_accesses: int = 0
    reading_time: float = 0.0
    markers: int = 0
    memos: int = 0
    total_actions: int = 0
    open: int = 0
    next: int = 0
    prev: int = 0
    page_jump: int = 0
    close: int = 0

    def __post_init__(self):
        if self.attendance not in ATTENDANCE_SCORES:
            raise FeatureError(f"unknown attendance status {self.attendance!r} for {self.student_id}")
        for s in self.reports:
            if s not in REPORT_SCORES:
                raise FeatureError(f"unknown report status {s!r} for {self.student_id}")
        for f in COUNT_FEATURES:
            if getattr(self, f) < 0:
                raise FeatureError(f"negative {f} for student {self.student_id} week {self.week}")


@dataclass
class StudentSequence:
    student_id: str
    features: np.ndarray  # (weeks, 12)
    label: int
    grade: str | None = None

    @property
    def weeks(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class SplitSpec:
    name: str
    train: tuple[str, ...]
    test: str

    def __post_init__(self):
        if self.test in self.train:
            raise FeatureError(f"split {self.name}: test course {self.test} also used for training")
        if not self.train:
            raise FeatureError(f"split {self.name}: no training course")


@dataclass
class Course:
    course_id: str
    sequences: list[StudentSequence] = field(default_factory=list)

    @property
    def year(self) -> int:
        return course_year(self.course_id)


def course_year(course_id: str) -> int:
    m = re.search(r"(\d{4})$", course_id)
    if not m:
        raise FeatureError(f"course id {course_id!r} does not end in a 4-digit year")
    return int(m.group(1))


# ----------------------------------------------------------------- scoring rules


def srp_attendance(status: str) -> int:
    try:
        return ATTENDANCE_SCORES[status]
    except KeyError:
        raise FeatureError(f"unknown attendance status {status!r}") from None


def srp_report(statuses: Sequence[str]) -> float:
    if not statuses:
        return 0.0
    try:
        return sum(REPORT_SCORES[s] for s in statuses) / len(statuses)
    except KeyError as exc:
        raise FeatureError(f"unknown report status {exc.args[0]!r}") from None


def srp_percentile(values) -> np.ndarray:
    """Decile scores 10..1 by descending rank among nonzero values; zeros score 0.

    A student at rank position ``j`` of ``N`` active students scores
    ``10 - floor(10 (j - 1) / N)``; tied values share the best position.
    """
    v = np.asarray(values, dtype=np.float64)
    if np.any(v < 0):
        raise FeatureError("activity values must be nonnegative")
    scores = np.zeros(v.shape, dtype=np.int64)
    active = np.flatnonzero(v > 0)
    n = active.size
    if n == 0:
        return scores
    av = v[active]
    # min rank position: 1 + number of strictly larger active values
    pos = 1 + (n - np.searchsorted(np.sort(av), av, side="right"))
    scores[active] = 10 - (10 * (pos - 1)) // n
    return scores


def grade_label(grade: str) -> int:
    if grade not in GRADES:
        raise FeatureError(f"unknown grade {grade!r}; expected one of {GRADES}")
    return int(grade in AT_RISK_GRADES)


# ----------------------------------------------------------------- sequence assembly


def build_sequences(records: Iterable[ActivityRecord], grades: Mapping[str, str], weeks: int = 7) -> list[StudentSequence]:
    """Featurize one course. Students come from the grade roster, in roster order.

    Weeks without a record count as zero activity.
    """
    ids = list(grades)
    index = {sid: i for i, sid in enumerate(ids)}
    n = len(ids)
    raw = np.zeros((weeks, n, len(FEATURES)))
    seen = set()
    for rec in records:
        if rec.student_id not in index:
            raise FeatureError(f"student {rec.student_id!r} has activity but no grade")
        if not 1 <= rec.week <= weeks:
            raise FeatureError(f"week {rec.week} outside course length {weeks} for {rec.student_id}")
        key = (rec.student_id, rec.week)
        if key in seen:
            raise FeatureError(f"duplicate record for student {rec.student_id!r} week {rec.week}")
        seen.add(key)
        row = raw[rec.week - 1, index[rec.student_id]]
        row[0] = srp_attendance(rec.attendance)
        row[1] = srp_report(rec.reports)
        for j, f in enumerate(COUNT_FEATURES, start=2):
            row[j] = getattr(rec, f)
    for w in range(weeks):
        for j in range(2, len(FEATURES)):
            raw[w, :, j] = srp_percentile(raw[w, :, j])
    mats = raw.transpose(1, 0, 2) / 10.0
    return [
        StudentSequence(sid, np.ascontiguousarray(mats[i]), grade_label(grades[sid]), grades[sid])
        for i, sid in enumerate(ids)
    ]


def truncate(seq: StudentSequence, n: int) -> StudentSequence:
    if not 1 <= n <= seq.weeks:
        raise FeatureError(f"cannot truncate a {seq.weeks}-week sequence to {n} weeks")
    return StudentSequence(seq.student_id, seq.features[:n].copy(), seq.label, seq.grade)


def make_split(spec: SplitSpec, courses: Mapping[str, Course | list[StudentSequence]]):
    """Concatenate training courses; return ``(train, test)`` sequence lists."""
    for cid in (*spec.train, spec.test):
        if cid not in courses:
            raise FeatureError(f"split {spec.name}: unknown course {cid!r}; have {sorted(courses)}")
    test_year = course_year(spec.test)
    if any(course_year(c) >= test_year for c in spec.train):
        raise FeatureError(f"split {spec.name}: training courses must precede the test course")

    def seqs(c):
        v = courses[c]
        return list(v.sequences if isinstance(v, Course) else v)

    train = [s for c in spec.train for s in seqs(c)]
    return train, seqs(spec.test)


def to_arrays(seqs: Sequence[StudentSequence], weeks: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    if not seqs:
        raise FeatureError("no sequences")
    X = np.stack([s.features if weeks is None else s.features[:weeks] for s in seqs])
    y = np.array([s.label for s in seqs], dtype=np.int64)
    return np.ascontiguousarray(X), y


# ----------------------------------------------------------------- CSV formats

ACTIVITY_COLUMNS = ("student_id", "week", "attendance", "reports") + COUNT_FEATURES


def write_activity_csv(path, records: Iterable[ActivityRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ACTIVITY_COLUMNS)
        for r in records:
            w.writerow(
                [r.student_id, r.week, r.attendance, REPORT_SEP.join(r.reports)]
                + [repr(float(r.reading_time)) if f == "reading_time" else int(getattr(r, f)) for f in COUNT_FEATURES]
            )


def read_activity_csv(path) -> list[ActivityRecord]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(ACTIVITY_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise FeatureError(f"{path}: missing columns {sorted(missing)}")
        for line, row in enumerate(reader, start=2):
            try:
                reports = tuple(s for s in row["reports"].split(REPORT_SEP) if s)
                counts = {f: (float(row[f]) if f == "reading_time" else int(row[f])) for f in COUNT_FEATURES}
                out.append(ActivityRecord(row["student_id"], int(row["week"]), row["attendance"], reports, **counts))
            except (ValueError, FeatureError) as exc:
                raise FeatureError(f"{path}:{line}: {exc}") from None
    return out


def write_grades_csv(path, grades: Mapping[str, str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["student_id", "grade"])
        for sid, g in grades.items():
            w.writerow([sid, g])


def read_grades_csv(path) -> dict[str, str]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if not {"student_id", "grade"} <= set(reader.fieldnames or ()):
            raise FeatureError(f"{path}: expected columns student_id, grade")
        grades = {}
        for row in reader:
            grade_label(row["grade"])
            grades[row["student_id"]] = row["grade"]
    return grades


def write_features_csv(path, seqs: Iterable[StudentSequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("student_id", "label", "week") + SRP_COLUMNS)
        for s in seqs:
            for week, row in enumerate(s.features, start=1):
                w.writerow([s.student_id, s.label, week] + [repr(float(v)) for v in row])


def read_features_csv(path) -> list[StudentSequence]:
    rows: dict[str, list] = {}
    labels: dict[str, int] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"student_id", "label", "week", *SRP_COLUMNS} - set(reader.fieldnames or ())
        if missing:
            raise FeatureError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            sid = row["student_id"]
            labels[sid] = int(row["label"])
            rows.setdefault(sid, []).append((int(row["week"]), [float(row[c]) for c in SRP_COLUMNS]))
    out = []
    for sid, weeks in rows.items():
        weeks.sort()
        if [w for w, _ in weeks] != list(range(1, len(weeks) + 1)):
            raise FeatureError(f"{path}: student {sid} has non-contiguous weeks")
        out.append(StudentSequence(sid, np.array([v for _, v in weeks]), labels[sid]))
    return out


def featurize_files(logs_path, grades_path, out_path, weeks: int = 7) -> list[StudentSequence]:
    seqs = build_sequences(read_activity_csv(logs_path), read_grades_csv(grades_path), weeks)
    write_features_csv(out_path, seqs)
    return seqs


def load_course(data_dir, course_id: str, weeks: int = 7) -> Course:
    """Featurized CSV ``<id>.features.csv`` if present, else featurize the raw logs."""
    d = Path(data_dir)
    feats = d / f"{course_id}.features.csv"
    if feats.exists():
        return Course(course_id, read_features_csv(feats))
    logs, grades = d / f"{course_id}.activity.csv", d / f"{course_id}.grades.csv"
    if not (logs.exists() and grades.exists()):
        raise FeatureError(f"no data for course {course_id!r} in {d}")
    return Course(course_id, build_sequences(read_activity_csv(logs), read_grades_csv(grades), weeks))
