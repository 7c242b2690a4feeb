"""Metrics, repeated-run aggregation, grid search and the experiment suites.

The positive class is at-risk (label 1). Precision, recall and F1 refer to it;
``weighted_f1`` is the support-weighted mean of the per-class F1 scores.
Undefined ratios (zero denominators) are reported as 0 and listed in
``Metrics.undefined``.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .distill import DistillConfig, TeacherTargets, TrainConfig, ablation_variants, distill_student, train_classifier, train_teacher
from .model import ModelConfig, ModelParams, predict_labels

log = logging.getLogger(__name__)

WEEK_RANGES = (3, 4, 5, 6)
BASELINES = ("MLP", "RNN", "GRU", "LSTM", "Bi-GRU", "Bi-LSTM")
KD_MODEL = "RNN-Attention-KD"


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion(preds, labels) -> ConfusionMatrix:
    p = np.asarray(preds, dtype=np.int64)
    y = np.asarray(labels, dtype=np.int64)
    if p.shape != y.shape:
        raise ValueError(f"{p.size} predictions for {y.size} labels")
    if not (np.isin(p, (0, 1)).all() and np.isin(y, (0, 1)).all()):
        raise ValueError("predictions and labels must be 0/1")
    tp = int(np.sum((p == 1) & (y == 1)))
    fp = int(np.sum((p == 1) & (y == 0)))
    fn = int(np.sum((p == 0) & (y == 1)))
    return ConfusionMatrix(tp, fp, fn, int(p.size) - tp - fp - fn)


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    weighted_f1: float
    undefined: tuple[str, ...] = ()


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def _f1(tp: int, fp: int, fn: int) -> tuple[float, float, float, list[str]]:
    undefined = []
    p = _ratio(tp, tp + fp)
    r = _ratio(tp, tp + fn)
    if p is None:
        undefined.append("precision")
        p = 0.0
    if r is None:
        undefined.append("recall")
        r = 0.0
    if p + r > 0:
        f = 2 * p * r / (p + r)
    else:
        undefined.append("f1")
        f = 0.0
    return p, r, f, undefined


def metrics(cm: ConfusionMatrix) -> Metrics:
    p, r, f, undefined = _f1(cm.tp, cm.fp, cm.fn)
    _, _, f0, _ = _f1(cm.tn, cm.fn, cm.fp)
    pos, neg = cm.tp + cm.fn, cm.tn + cm.fp
    wf1 = (pos * f + neg * f0) / cm.total if cm.total else 0.0
    return Metrics(p, r, f, wf1, tuple(undefined))


def evaluate(params: ModelParams, X, y) -> Metrics:
    return metrics(confusion(predict_labels(params, X), y))


@dataclass
class MetricsReport:
    runs: list[Metrics]
    seeds: list[int]

    @property
    def n_runs(self) -> int:
        return len(self.runs)

    def mean(self, name: str) -> float:
        return float(np.mean([getattr(m, name) for m in self.runs]))

    @property
    def means(self) -> dict[str, float]:
        return {k: self.mean(k) for k in ("precision", "recall", "f1", "weighted_f1")}


def repeated_runs(experiment: Callable[[int], Metrics], runs: int = 30, base_seed: int = 0, jobs: int = 1) -> MetricsReport:
    """Run ``experiment(seed)`` for seeds ``base_seed .. base_seed + runs - 1``.

    With ``jobs > 1`` the runs go to a process pool (``experiment`` must then be
    picklable); results are always ordered by seed.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    seeds = list(range(base_seed, base_seed + runs))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(experiment, seeds))
    else:
        results = [experiment(s) for s in seeds]
    return MetricsReport(results, seeds)


# ----------------------------------------------------------------- cross-validation


def stratified_folds(labels, folds: int = 5, seed: int = 0) -> list[np.ndarray]:
    """Validation index sets; each class is shuffled and dealt round-robin."""
    y = np.asarray(labels)
    rng = np.random.default_rng(seed)
    buckets: list[list[int]] = [[] for _ in range(folds)]
    offset = 0
    for cls in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == cls))
        for j, i in enumerate(idx):
            buckets[(offset + j) % folds].append(int(i))
        offset += len(idx)
    return [np.sort(np.array(b, dtype=np.int64)) for b in buckets]


@dataclass(frozen=True)
class GridPoint:
    cell: str
    hidden: int
    lr: float

    def sort_key(self, score: float):
        return (-score, self.hidden, self.lr, self.cell != "gru")


def default_grid() -> list[GridPoint]:
    return [GridPoint(c, h, lr) for c, h, lr in itertools.product(("gru", "lstm"), (4, 6, 8, 10), (0.01, 0.001))]


def _fold_score(point: GridPoint, X, y, train_idx, val_idx, base: TrainConfig, weeks: int | None) -> float:
    cfg = replace(base, cell=point.cell, hidden=point.hidden, lr=point.lr)
    teacher, _ = train_teacher(X[train_idx], y[train_idx], cfg)
    if weeks is None or weeks >= X.shape[1]:
        return evaluate(teacher, X[val_idx], y[val_idx]).f1
    dcfg = DistillConfig(**asdict(cfg), weeks=weeks)
    pair = distill_student(teacher, X[train_idx], y[train_idx], dcfg)
    return evaluate(pair.student, X[val_idx][:, :weeks], y[val_idx]).f1


def grid_search(X, y, grid: Sequence[GridPoint] | None = None, folds: int = 5,
                base: TrainConfig | None = None, weeks: int | None = None, seed: int = 0):
    """Mean validation F1 per grid point over stratified folds.

    Scores the full-length teacher, or with ``weeks`` the distilled student.
    Returns ``(best_point, [(point, mean_f1), ...])``; ties prefer fewer
    hidden units, then the lower learning rate, then GRU.
    """
    grid = list(default_grid() if grid is None else grid)
    if not grid:
        raise ValueError("empty grid")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    base = base or TrainConfig(seed=seed)
    val_sets = stratified_folds(y, folds, seed)
    everyone = np.arange(len(y))
    table = []
    for point in grid:
        scores = [_fold_score(point, X, y, np.setdiff1d(everyone, v), v, base, weeks) for v in val_sets]
        table.append((point, float(np.mean(scores))))
        log.info("grid %s -> %.4f", point, table[-1][1])
    best = min(table, key=lambda t: t[0].sort_key(t[1]))[0]
    return best, table


# ----------------------------------------------------------------- experiment suites


def baseline_config(name: str, weeks: int, hidden: int = 4, features: int = 12) -> ModelConfig:
    table = {
        "MLP": ("gru", "mlp"),
        "RNN": ("vanilla", "recurrent"),
        "GRU": ("gru", "recurrent"),
        "LSTM": ("lstm", "recurrent"),
        "Bi-GRU": ("gru", "bidirectional"),
        "Bi-LSTM": ("lstm", "bidirectional"),
    }
    cell, arch = table[name]
    return ModelConfig(cell=cell, hidden=hidden, features=features, seq_len=weeks, arch=arch)


@dataclass
class SplitData:
    name: str
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray


@dataclass
class BaselineRun:
    """Picklable ``seed -> Metrics`` for one baseline at one week range."""

    data: SplitData
    model: str
    weeks: int
    train: TrainConfig

    def __call__(self, seed: int) -> Metrics:
        cfg = baseline_config(self.model, self.weeks, self.train.hidden, self.data.X_train.shape[2])
        params, _ = train_classifier(cfg, self.data.X_train[:, : self.weeks], self.data.y_train, replace(self.train, seed=seed))
        return evaluate(params, self.data.X_test[:, : self.weeks], self.data.y_test)


@dataclass
class StudentRun:
    """Picklable ``seed -> Metrics`` for one distillation config."""

    data: SplitData
    teacher: ModelParams
    config: DistillConfig
    targets: TeacherTargets | None = None
    calls: list = field(default_factory=list)

    def __call__(self, seed: int) -> Metrics:
        pair = distill_student(self.teacher, self.data.X_train, self.data.y_train, replace(self.config, seed=seed), self.targets)
        self.calls.append(dict(pair.loss_calls))
        w = self.config.weeks
        return evaluate(pair.student, self.data.X_test[:, :w], self.data.y_test)


def _row(split: str, model: str, weeks: int, rep: MetricsReport) -> dict:
    m = rep.means
    return {
        "dataset": split,
        "model": model,
        "weeks": f"1-{weeks}",
        "PR": m["precision"],
        "RE": m["recall"],
        "F1": m["f1"],
        "wF1": m["weighted_f1"],
        "runs": rep.n_runs,
    }


def fit_teacher(data: SplitData, train: TrainConfig) -> ModelParams:
    teacher, _ = train_teacher(data.X_train, data.y_train, train)
    return teacher


def baseline_suite(data: SplitData, teacher: ModelParams | None = None, weeks: Iterable[int] = WEEK_RANGES,
                   runs: int = 30, base_seed: int = 0, train: TrainConfig | None = None,
                   distill: DistillConfig | None = None, models: Sequence[str] = BASELINES + (KD_MODEL,),
                   jobs: int = 1) -> list[dict]:
    """Six baselines and the distilled student, each over ``runs`` seeds per week range."""
    train = train or TrainConfig()
    distill = distill or DistillConfig(**asdict(train))
    if KD_MODEL in models and teacher is None:
        teacher = fit_teacher(data, train)
    targets = TeacherTargets.compute(teacher, data.X_train) if teacher is not None else None
    rows = []
    for n in weeks:
        for name in models:
            if name == KD_MODEL:
                exp = StudentRun(data, teacher, replace(distill, weeks=n), targets)
            else:
                exp = BaselineRun(data, name, n, train)
            rows.append(_row(data.name, name, n, repeated_runs(exp, runs, base_seed, jobs)))
            log.info("%s %s 1-%d done", data.name, name, n)
    return rows


def ablation_suite(data: SplitData, teacher: ModelParams, weeks: Iterable[int] = WEEK_RANGES, runs: int = 30,
                   base_seed: int = 0, distill: DistillConfig | None = None,
                   configs: Sequence[DistillConfig] | None = None, jobs: int = 1) -> list[dict]:
    """Every loss-subset configuration over ``runs`` seeds per week range."""
    configs = list(configs or ablation_variants(distill or DistillConfig()))
    targets = TeacherTargets.compute(teacher, data.X_train)
    rows = []
    for n in weeks:
        for cfg in configs:
            exp = StudentRun(data, teacher, replace(cfg, weeks=n), targets)
            rep = repeated_runs(exp, runs, base_seed, jobs)
            row = _row(data.name, cfg.label, n, rep)
            rows.append(row)
    return rows


def teacher_report(datasets: Sequence[SplitData], teachers: Sequence[ModelParams]) -> list[dict]:
    rows = []
    for data, teacher in zip(datasets, teachers):
        m = evaluate(teacher, data.X_test, data.y_test)
        rows.append({"dataset": data.name, "PR": m.precision, "RE": m.recall, "F1": m.f1, "wF1": m.weighted_f1})
    return rows


# ----------------------------------------------------------------- report output


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_report_csv(path, rows: Sequence[dict], meta: dict) -> None:
    """CSV with ``#``-prefixed metadata lines (seeds, configs, profile version) on top."""
    with open(path, "w", newline="") as fh:
        for key in sorted(meta):
            fh.write(f"# {key}: {json.dumps(meta[key], sort_keys=True)}\n")
        if not rows:
            return
        w = csv.writer(fh)
        cols = list(rows[0])
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in cols])


def read_report_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("".join(lines))))


def format_table(rows: Sequence[dict], digits: int = 2) -> str:
    """Aligned text table for humans."""
    if not rows:
        return ""
    cols = list(rows[0])
    cells = [[c for c in cols]] + [
        [f"{r[c]:.{digits}f}" if isinstance(r[c], (float, np.floating)) else str(r[c]) for c in cols] for r in rows
    ]
    widths = [max(len(row[i]) for row in cells) for i in range(len(cols))]
    lines = ["  ".join(v.rjust(w) if j else v.ljust(w) for j, (v, w) in enumerate(zip(row, widths))) for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
