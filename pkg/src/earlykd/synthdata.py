"""Synthetic course cohorts with a planted, late-growing at-risk signal.

Every student gets a grade drawn from the course's grade distribution and a
lognormal engagement multiplier. Week ``t`` activity means are the shared
week-1 means scaled by ``retention[grade] ** (t - 1)``, so at-risk bands
(lower retention) drift away from the others as the course goes on. Counts
are negative-binomial; attendance and report statuses are categorical draws
whose "good" probability decays the same way.

All constants come from a YAML profile (see ``profiles/default.yaml``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .features import (
    AT_RISK_GRADES,
    COUNT_FEATURES,
    GRADES,
    ActivityRecord,
    FeatureError,
    SplitSpec,
)

LMS_FEATURES = {"course_accesses"}


class ProfileError(ValueError):
    pass


@dataclass
class CohortProfile:
    course_id: str
    students: int
    grade_probs: dict[str, float]
    retention: dict[str, float]
    attendance: dict[str, tuple[float, float]]
    reports: dict[str, tuple[float, float]]
    features: dict[str, dict[str, float]]
    modality: str = "online"
    modality_params: dict[str, float] = field(default_factory=dict)
    weeks: int = 7
    reports_due: tuple[int, ...] = (1, 1, 1, 1, 1, 1, 1)
    heterogeneity: float = 0.45
    week_noise: float = 0.35
    seed: int = 0

    def validate(self) -> None:
        if self.students < 1:
            raise ProfileError(f"{self.course_id}: student count must be positive")
        if set(self.grade_probs) != set(GRADES):
            raise ProfileError(f"{self.course_id}: grade probabilities must cover {GRADES}")
        if any(p < 0 for p in self.grade_probs.values()) or abs(sum(self.grade_probs.values()) - 1.0) > 1e-6:
            raise ProfileError(f"{self.course_id}: grade probabilities must be nonnegative and sum to 1")
        if len(self.reports_due) != self.weeks:
            raise ProfileError("reports_due needs one entry per week")
        missing = set(COUNT_FEATURES) - set(self.features)
        if missing:
            raise ProfileError(f"profile lacks feature parameters for {sorted(missing)}")
        worst_safe = min(self.retention[g] for g in GRADES if g not in AT_RISK_GRADES)
        best_risk = max(self.retention[g] for g in AT_RISK_GRADES)
        if not best_risk < worst_safe:
            raise ProfileError("at-risk grades must decay strictly faster than A/B grades")
        for g in GRADES:
            for name, probs in (("attendance", self.attendance[g]), ("reports", self.reports[g])):
                if min(probs) < 0 or sum(probs) > 1:
                    raise ProfileError(f"{name} probabilities for grade {g} are invalid: {probs}")


@dataclass
class BenchmarkProfile:
    version: str
    cohorts: list[CohortProfile]
    splits: list[SplitSpec]
    source: dict

    def cohort(self, course_id: str) -> CohortProfile:
        for c in self.cohorts:
            if c.course_id == course_id:
                return c
        raise KeyError(course_id)


def default_profile_path() -> Path:
    return Path(str(resources.files("earlykd") / "profiles" / "default.yaml"))


def load_profile(path=None, seed: int = 0) -> BenchmarkProfile:
    """Parse a profile file into per-course cohort profiles and split specs.

    Course ``i`` is seeded with ``seed * 1000 + i`` so cohorts are independent.
    """
    path = Path(path) if path else default_profile_path()
    try:
        raw = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ProfileError(f"cannot read profile {path}: {exc}") from None
    try:
        bands = raw["bands"]
        cohorts = []
        for i, c in enumerate(raw["courses"]):
            mod = raw["modality"][c["modality"]]
            cohort = CohortProfile(
                course_id=c["id"],
                students=int(c["students"]),
                grade_probs={g: float(c["grades"][g]) for g in GRADES},
                retention={g: float(bands[g]["retention"]) for g in GRADES},
                attendance={g: tuple(bands[g]["attendance"]) for g in GRADES},
                reports={g: tuple(bands[g]["reports"]) for g in GRADES},
                features={f: dict(raw["features"][f]) for f in COUNT_FEATURES},
                modality=c["modality"],
                modality_params=dict(mod),
                weeks=int(raw["weeks"]),
                reports_due=tuple(raw["reports_due"]),
                heterogeneity=float(raw["heterogeneity"]),
                week_noise=float(raw["week_noise"]),
                seed=seed * 1000 + i,
            )
            cohort.validate()
            cohorts.append(cohort)
        splits = [SplitSpec(s["name"], tuple(s["train"]), s["test"]) for s in raw["splits"]]
    except (KeyError, TypeError) as exc:
        raise ProfileError(f"profile {path} is missing or malformed key: {exc}") from None
    except FeatureError as exc:
        raise ProfileError(str(exc)) from None
    return BenchmarkProfile(str(raw.get("version", "unversioned")), cohorts, splits, raw)


def _nb(rng: np.random.Generator, mean: float, shape: float) -> int:
    if mean <= 0:
        return 0
    return int(rng.negative_binomial(shape, shape / (shape + mean)))


def generate_course(profile: CohortProfile) -> tuple[list[ActivityRecord], dict[str, str]]:
    """Sample one course: activity records (one per student-week) and the grade roster."""
    profile.validate()
    rng = np.random.default_rng(profile.seed)
    grades_idx = rng.choice(len(GRADES), size=profile.students, p=[profile.grade_probs[g] for g in GRADES])
    width = len(str(profile.students))
    roster: dict[str, str] = {}
    records: list[ActivityRecord] = []
    mp = profile.modality_params
    shift = float(mp.get("attendance_shift", 0.0))
    for i, gi in enumerate(grades_idx):
        grade = GRADES[gi]
        sid = f"{profile.course_id}-S{i + 1:0{width}d}"
        roster[sid] = grade
        engagement = rng.lognormal(0.0, profile.heterogeneity)
        retention = profile.retention[grade]
        p_present, p_late = profile.attendance[grade]
        q_on, q_late = profile.reports[grade]
        for week in range(1, profile.weeks + 1):
            keep = retention ** (week - 1)
            present = min(p_present * keep + shift, 1.0 - p_late)
            att = rng.choice(3, p=[present, p_late, 1.0 - present - p_late])
            on = q_on * keep
            reports = tuple(
                ("on_time", "late", "none")[rng.choice(3, p=[on, q_late, 1.0 - on - q_late])]
                for _ in range(profile.reports_due[week - 1])
            )
            jitter = rng.lognormal(0.0, profile.week_noise)
            counts = {}
            for f in COUNT_FEATURES:
                spec = profile.features[f]
                scale = mp.get("lms_scale", 1.0) if f in LMS_FEATURES else mp.get("ebook_scale", 1.0)
                mean = spec["mean"] * scale * engagement * keep * jitter
                value = _nb(rng, mean, spec["shape"])
                counts[f] = float(value) if f == "reading_time" else value
            records.append(
                ActivityRecord(sid, week, ("present", "late", "absent")[att], reports, **counts)
            )
    return records, roster


def benchmark_suite(profile_path=None, seed: int = 0):
    """Four generated courses keyed by id, plus the six split specs."""
    prof = load_profile(profile_path, seed)
    courses = {c.course_id: generate_course(c) for c in prof.cohorts}
    return courses, prof.splits, prof
