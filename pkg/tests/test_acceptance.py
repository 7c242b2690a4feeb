"""One test per acceptance criterion, each recording a PASS/FAIL line.

The lines are printed in the terminal summary (see conftest.py). Criteria 7-9
run on the frozen benchmark: the shipped profile with data seed 0, default
hyperparameters, 30 seeded runs per model.
"""

import time
from dataclasses import replace

import numpy as np
import pytest

from earlykd import numerics as nx
from earlykd.cli import main
from earlykd.distill import (
    DistillConfig,
    TeacherTargets,
    TrainConfig,
    ablation_variants,
    context_step,
    distill_student,
    distillation_loss,
    hint_loss,
    context_loss,
    hint_step,
    kd_step,
    one_hot,
    train_teacher,
)
from earlykd.evaluation import BaselineRun, SplitData, StudentRun, confusion, evaluate, metrics, repeated_runs
from earlykd.features import (
    Course,
    build_sequences,
    make_split,
    srp_attendance,
    srp_percentile,
    srp_report,
    to_arrays,
)
from earlykd.model import ModelConfig, ModelParams, forward
from earlykd.numerics import AdamState, Tensor
from earlykd.synthdata import benchmark_suite

from .conftest import ACCEPTANCE_LINES
from .gradcases import run_suite
from .oracles import tally
from .test_attention import attention_invariants
from .test_features import EXPECTED, FIXTURE_GRADES, fixture_records

RUNS = 30
EARLY = 3


def record(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


# ---------------------------------------------------------------- frozen benchmark


@pytest.fixture(scope="module")
def bench():
    courses, splits, _ = benchmark_suite(seed=0)
    built = {cid: Course(cid, build_sequences(r, g)) for cid, (r, g) in courses.items()}
    out = []
    for spec in splits:
        train, test = make_split(spec, built)
        X, y = to_arrays(train)
        Xt, yt = to_arrays(test)
        data = SplitData(spec.name, X, y, Xt, yt)
        t0 = time.perf_counter()
        teacher, _ = train_teacher(X, y, TrainConfig(seed=0))
        seconds = time.perf_counter() - t0
        out.append((data, teacher, TeacherTargets.compute(teacher, X), seconds))
    return out


# ---------------------------------------------------------------- 1. gradients


def test_criterion_1_gradient_suite():
    t0 = time.perf_counter()
    worst = run_suite(instances=100, seed=0)
    took = time.perf_counter() - t0
    err = max(worst.values())
    record(1, err < 1e-4 and took < 60,
           f"{len(worst)} ops x 100 instances, worst rel err {err:.2e} ({max(worst, key=worst.get)}), {took:.1f}s")


# ---------------------------------------------------------------- 2. attention


def test_criterion_2_attention_invariants():
    try:
        n = attention_invariants(instances=1000, seed=2)
        ok = n == 1000
    except AssertionError as exc:
        n, ok = 0, False
        print(exc)
    record(2, ok, f"sum/nonnegativity/shift/one-hot/exact context over {n} instances")


# ---------------------------------------------------------------- 3. phase isolation


def _changed(before, after):
    return {g for g, sl in before.groups.items() if before.flat[sl].tobytes() != after.flat[sl].tobytes()}


def test_criterion_3_phase_isolation_and_frozen_teacher():
    rng = np.random.default_rng(3)
    X = rng.random((24, 7, 12))
    y = np.arange(24) % 2
    teacher, _ = train_teacher(X, y, TrainConfig(epochs=3, seed=0))
    frozen = teacher.flat.tobytes()
    bad = []
    for trial in range(50):
        cell = ("gru", "lstm")[trial % 2]
        n = int(rng.integers(1, 8))
        s = ModelParams.init(ModelConfig(cell=cell, seq_len=n), trial)
        idx = rng.choice(24, size=int(rng.integers(1, 9)), replace=False)
        Xs = X[idx, :n]
        steps = (
            (hint_step, (Xs, rng.uniform(-1, 1, (len(idx), 4)), AdamState.zeros_like(s.group("encoder"))), {"encoder"}),
            (context_step, (Xs, rng.uniform(-1, 1, (len(idx), 4)), AdamState.zeros_like(s.group("attention"))), {"attention"}),
            (kd_step, (Xs, one_hot(y[idx]), rng.dirichlet([1, 1], len(idx)), 0.1, AdamState.zeros_like(s.flat)),
             {"encoder", "attention", "head"}),
        )
        for step, args, expect in steps:
            before = s.copy()
            step(s, *args, float(rng.uniform(1e-3, 0.1)), 1e-5)
            if _changed(before, s) != expect:
                bad.append((trial, step.__name__))
    for cfg in ablation_variants(DistillConfig(epochs=2, weeks=3)):
        distill_student(teacher, X, y, cfg)
    record(3, not bad and teacher.flat.tobytes() == frozen,
           f"50 randomized trials x 3 phases, {len(bad)} violations; teacher bytes unchanged after 7 distillations")


# ---------------------------------------------------------------- 4. loss identities


def test_criterion_4_loss_identities():
    rng = np.random.default_rng(4)
    lam0 = True
    for _ in range(200):
        s, t = rng.normal(size=2) * 3, rng.normal(size=2) * 3
        yt = np.eye(2)[rng.integers(2)]
        hard = -np.log(np.exp(s - s.max()) / np.exp(s - s.max()).sum()) @ yt
        got = distillation_loss(yt, Tensor(s), t, 0.0).item()
        lam0 &= got == nx.cross_entropy(Tensor(s), yt).item() and abs(got - hard) < 1e-12
    X = rng.random((10, 7, 12))
    teacher, _ = train_teacher(X, np.arange(10) % 2, TrainConfig(epochs=2, seed=0))
    copy = ModelParams(replace(teacher.config), teacher.flat.copy())
    zero = all(
        hint_loss(forward(teacher, x), forward(copy, x)).item() == 0.0
        and context_loss(forward(teacher, x), forward(copy, x)).item() == 0.0
        for x in X
    )
    cfg = DistillConfig(use_hint=False, use_context=False, use_soft=True, epochs=3, batch=4)
    calls = distill_student(teacher, X, np.arange(10) % 2, cfg).loss_calls
    soft_only = calls.get("hint", 0) == 0 and calls.get("context", 0) == 0 and calls["soft"] == 9
    record(4, lam0 and zero and soft_only,
           f"lambda=0 exact on 200 draws: {lam0}; copied teacher zero hint/context: {zero}; "
           f"Only-Soft calls {dict(sorted(calls.items()))}")


# ---------------------------------------------------------------- 5. SRP conformance


def test_criterion_5_srp_conformance():
    rows = (
        [srp_attendance(s) for s in ("present", "late", "absent")] == [10, 5, 0]
        and [srp_report([s]) for s in ("on_time", "late", "none")] == [10, 5, 0]
        and srp_report(["on_time", "late"]) == 7.5
        and srp_percentile(list(range(10, 0, -1))).tolist() == list(range(10, 0, -1))
        and srp_percentile([0, 0, 4]).tolist() == [0, 0, 10]
    )
    seqs = build_sequences(fixture_records(), FIXTURE_GRADES, weeks=2)
    exact = all(s.features.tobytes() == np.array(EXPECTED[s.student_id]).tobytes() for s in seqs)
    record(5, rows and exact, f"Table rows verbatim: {rows}; 3-student fixture bit-exact: {exact}")


# ---------------------------------------------------------------- 6. metrics oracle


def test_criterion_6_metrics_oracle():
    rng = np.random.default_rng(6)
    mismatches, worst = 0, 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 50))
        p, y = rng.integers(0, 2, n), rng.integers(0, 2, n)
        cm = confusion(p, y)
        tp, fp, fn, tn = tally(p.tolist(), y.tolist())
        m = metrics(cm)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        mismatches += (cm.tp, cm.fp, cm.fn, cm.tn) != (tp, fp, fn, tn) or (m.precision, m.recall) != (prec, rec)
        if prec and rec:
            worst = max(worst, abs(m.f1 - 2 / (1 / prec + 1 / rec)))
    record(6, mismatches == 0 and worst <= 1e-12,
           f"1000 pairs, {mismatches} tally mismatches, harmonic-mean gap {worst:.1e}")


# ---------------------------------------------------------------- 7-9. frozen benchmark


@pytest.mark.slow
def test_criterion_7_teacher_sanity(bench):
    f1 = {d.name: evaluate(t, d.X_test, d.y_test).f1 for d, t, _, _ in bench}
    secs = max(s for *_, s in bench)
    detail = ", ".join(f"{k} {v:.3f}" for k, v in f1.items())
    record(7, min(f1.values()) >= 0.70 and secs < 60, f"teacher test F1 {detail}; slowest teacher {secs:.1f}s")


@pytest.mark.slow
def test_criterion_8_distillation_efficacy(bench):
    t0 = time.perf_counter() - sum(s for *_, s in bench)  # teacher training counts toward the budget
    deltas = {}
    for data, teacher, targets, _ in bench:
        gru = repeated_runs(BaselineRun(data, "GRU", EARLY, TrainConfig()), RUNS)
        kd = repeated_runs(StudentRun(data, teacher, DistillConfig(weeks=EARLY), targets), RUNS)
        deltas[data.name] = kd.mean("recall") - gru.mean("recall")
    took = time.perf_counter() - t0
    wins = sum(d >= 0.02 for d in deltas.values())
    detail = ", ".join(f"{k} {v:+.3f}" for k, v in deltas.items())
    record(8, wins >= 4 and took < 15 * 60,
           f"weeks 1-{EARLY} recall gain KD - GRU over {RUNS} runs: {detail}; {wins}/6 splits >= 0.02; {took:.0f}s")


@pytest.mark.slow
def test_criterion_9_ablation_shape(bench):
    variants = {c.label: c for c in ablation_variants(DistillConfig(weeks=EARLY))}
    means = {"Soft": [], "CV+HD": []}
    for data, teacher, targets, _ in bench:
        for label in means:
            means[label].append(repeated_runs(StudentRun(data, teacher, variants[label], targets), RUNS).mean("f1"))
    soft, cvhd = float(np.mean(means["Soft"])), float(np.mean(means["CV+HD"]))
    record(9, soft <= cvhd, f"weeks 1-{EARLY} mean F1 over splits: Only-Soft {soft:.4f}, CV+HD {cvhd:.4f}")


# ---------------------------------------------------------------- 10. reproducibility


def _tree(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_10_cli_reruns_byte_identical(tmp_path):
    data, out = tmp_path / "data", tmp_path / "out"
    quick = ["--epochs", "2", "--hidden", "3"]
    commands = [
        ["gen-data", "--out", str(data), "--seed", "1"],
        ["featurize", "--logs", str(data / "PT2021.activity.csv"), "--grades", str(data / "PT2021.grades.csv"),
         "--out", str(out / "feat" / "PT2021.features.csv")],
        ["train-teacher", "--data", str(data), "--split", "T20P21", *quick, "--out", str(out / "t" / "teacher.ckpt")],
        ["distill", "--data", str(data), "--split", "T20P21", "--teacher", str(out / "t" / "teacher.ckpt"),
         "--weeks", "3", "--epochs", "2", "--out", str(out / "s")],
        ["evaluate", "--data", str(data), "--split", "T20P21", "--model", str(out / "s" / "student.ckpt"),
         "--out", str(out / "eval.json")],
        ["baselines", "--data", str(data), "--split", "T20P21", "--runs", "2", "--weeks", "3", *quick,
         "--out", str(out / "b")],
        ["ablate", "--data", str(data), "--split", "T20P21", "--teacher", str(out / "t" / "teacher.ckpt"),
         "--runs", "2", "--weeks", "3", *quick, "--out", str(out / "a")],
        ["grid-search", "--data", str(data), "--split", "T20P21", "--folds", "2", "--epochs", "1",
         "--out", str(out / "g")],
        ["teacher-report", "--data", str(data), "--split", "T20P21", *quick, "--out", str(out / "r")],
    ]
    snaps, codes = [], []
    for _ in range(2):
        codes += [main(c) for c in commands]
        snaps.append(_tree(tmp_path))
    diff = [k for k in snaps[0] if snaps[0][k] != snaps[1].get(k)]
    ok = set(codes) == {0} and not diff and snaps[0].keys() == snaps[1].keys()
    record(10, ok, f"{len(commands)} subcommands rerun, {len(snaps[0])} files, {len(diff)} differ")
