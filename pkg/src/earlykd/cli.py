"""``earlykd`` command line: data generation, featurization, training, distillation, reports.

Settings resolve as command-line flags > ``--config`` YAML file > defaults.
Each command writes a resolved-settings snapshot next to its outputs: ``config.json``
in an output directory, or ``<stem>.config.json`` beside a single output file.
Exit status: 0 success, 1 invalid input or configuration, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np
import yaml

from . import evaluation as ev
from . import kernels
from .distill import DistillConfig, TrainConfig, distill_student, train_teacher, write_trace
from .features import FeatureError, SplitSpec, featurize_files, load_course, make_split, to_arrays, write_activity_csv, write_grades_csv
from .model import load_checkpoint, save_checkpoint
from .synthdata import ProfileError, benchmark_suite, default_profile_path

log = logging.getLogger("earlykd")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
SPLITS_FILE = "splits.json"
PROFILE_SNAPSHOT = "profile.yaml"
TRAIN_KEYS = [f.name for f in fields(DistillConfig)]


class ConfigError(ValueError):
    pass


# ----------------------------------------------------------------- helpers


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _read_config_file(path) -> dict:
    if path is None:
        return {}
    try:
        raw = yaml.safe_load(Path(path).read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping of setting names to values")
    if "lambda" in raw:
        raw["lam"] = raw.pop("lambda")
    unknown = set(raw) - set(TRAIN_KEYS) - {"losses"}
    if unknown:
        raise ConfigError(f"config {path}: unknown keys {sorted(unknown)}; allowed {sorted(TRAIN_KEYS + ['losses'])}")
    return raw


def resolve_config(args) -> DistillConfig:
    """Merge defaults, the YAML file and explicit flags into one DistillConfig."""
    values = _read_config_file(getattr(args, "config", None))
    for key in TRAIN_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    losses = getattr(args, "losses", None) or values.pop("losses", None)
    try:
        if losses is not None:
            flags = DistillConfig.from_losses(losses)
            values.update(use_hint=flags.use_hint, use_context=flags.use_context, use_soft=flags.use_soft)
        return DistillConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None


def train_part(cfg: DistillConfig) -> TrainConfig:
    return TrainConfig(**{f.name: getattr(cfg, f.name) for f in fields(TrainConfig)})


def _data_meta(data_dir: Path) -> dict:
    snap = data_dir / PROFILE_SNAPSHOT
    if not snap.exists():
        return {"profile_version": "unknown"}
    raw = yaml.safe_load(snap.read_text()) or {}
    return {"profile_version": str(raw.get("version", "unknown"))}


def read_splits(data_dir: Path) -> list[SplitSpec]:
    path = data_dir / SPLITS_FILE
    try:
        raw = json.loads(path.read_text())
    except OSError:
        raise ConfigError(f"{path} not found; run 'earlykd gen-data' or provide a split file") from None
    return [SplitSpec(s["name"], tuple(s["train"]), s["test"]) for s in raw]


def load_split(data_dir, name: str) -> ev.SplitData:
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise ConfigError(f"data directory {data_dir} does not exist")
    specs = {s.name: s for s in read_splits(data_dir)}
    if name not in specs:
        raise ConfigError(f"unknown split {name!r}; available: {', '.join(specs)}")
    spec = specs[name]
    courses = {cid: load_course(data_dir, cid) for cid in (*spec.train, spec.test)}
    train, test = make_split(spec, courses)
    X, y = to_arrays(train)
    Xt, yt = to_arrays(test)
    return ev.SplitData(name, X, y, Xt, yt)


def _out_dir(path) -> Path:
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _snapshot(out: Path, command: str, args, extra: dict | None = None, name: str = "config.json") -> None:
    snap = {
        "command": command,
        "arguments": {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "verbose")},
        "kernel_backend": kernels.BACKEND,
    }
    snap.update(extra or {})
    _dump_json(out / name, _jsonable(snap))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _metrics_dict(m: ev.Metrics) -> dict:
    return {"precision": m.precision, "recall": m.recall, "f1": m.f1, "weighted_f1": m.weighted_f1,
            "undefined": list(m.undefined)}


def _weeks_list(text: str) -> list[int]:
    try:
        weeks = [int(w) for w in text.split(",") if w.strip()]
    except ValueError:
        raise ConfigError(f"--weeks expects comma-separated integers, got {text!r}") from None
    if not weeks:
        raise ConfigError("--weeks is empty")
    return weeks


def _check_weeks(weeks, data: ev.SplitData) -> None:
    m = data.X_train.shape[1]
    for n in weeks:
        if not 1 <= n <= m:
            raise ConfigError(f"week range 1-{n} is outside the {m} weeks of data")


def _teacher_for(args, data: ev.SplitData, cfg: DistillConfig):
    if getattr(args, "teacher", None):
        teacher, _ = load_checkpoint(args.teacher)
        return teacher
    log.info("training teacher for %s", data.name)
    return ev.fit_teacher(data, train_part(cfg))


def _write_table(out: Path, stem: str, rows, meta: dict) -> None:
    ev.write_report_csv(out / f"{stem}.csv", rows, meta)
    (out / f"{stem}.txt").write_text(ev.format_table(rows))


# ----------------------------------------------------------------- subcommands


def cmd_gen_data(args) -> None:
    profile = Path(args.profile) if args.profile else default_profile_path()
    out = _out_dir(args.out)
    courses, splits, prof = benchmark_suite(profile, args.seed)
    for cid, (records, roster) in courses.items():
        write_activity_csv(out / f"{cid}.activity.csv", records)
        write_grades_csv(out / f"{cid}.grades.csv", roster)
    _dump_json(out / SPLITS_FILE, [{"name": s.name, "train": list(s.train), "test": s.test} for s in splits])
    (out / PROFILE_SNAPSHOT).write_text(profile.read_text())
    _snapshot(out, "gen-data", args, {"profile_version": prof.version})
    print(f"wrote {len(courses)} courses and {len(splits)} splits to {out}")


def cmd_featurize(args) -> None:
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    seqs = featurize_files(args.logs, args.grades, out, args.course_weeks)
    _snapshot(out.parent, "featurize", args, name=f"{out.stem}.config.json")
    print(f"featurized {len(seqs)} students -> {out}")


def cmd_train_teacher(args) -> None:
    cfg = resolve_config(args)
    data = load_split(args.data, args.split)
    teacher, trace = train_teacher(data.X_train, data.y_train, train_part(cfg))
    ckpt = Path(args.out)
    out = _out_dir(ckpt.parent)
    save_checkpoint(ckpt, teacher, {"role": "teacher", "split": args.split, "train": asdict(train_part(cfg))})
    write_trace(out / f"{ckpt.stem}.trace.csv", trace)
    m = ev.evaluate(teacher, data.X_test, data.y_test)
    _dump_json(out / f"{ckpt.stem}.metrics.json", {"split": args.split, "test": _metrics_dict(m)})
    _snapshot(out, "train-teacher", args, {"resolved": asdict(train_part(cfg)), **_data_meta(Path(args.data))},
              name=f"{ckpt.stem}.config.json")
    print(f"teacher {args.split}: test F1 {m.f1:.4f} -> {ckpt}")


def cmd_distill(args) -> None:
    cfg = resolve_config(args)
    data = load_split(args.data, args.split)
    _check_weeks([cfg.weeks], data)
    teacher, _ = load_checkpoint(args.teacher)
    cfg = replace(cfg, cell=teacher.config.cell, hidden=teacher.config.hidden) if args.cell is None and args.hidden is None else cfg
    pair = distill_student(teacher, data.X_train, data.y_train, cfg)
    out = _out_dir(args.out)
    save_checkpoint(out / "student.ckpt", pair.student, {"role": "student", "split": args.split, "distill": asdict(cfg)})
    write_trace(out / "trace.csv", pair.trace)
    m = ev.evaluate(pair.student, data.X_test[:, : cfg.weeks], data.y_test)
    report = {"split": args.split, "weeks": cfg.weeks, "config": cfg.label, "test": _metrics_dict(m),
              "loss_calls": dict(sorted(pair.loss_calls.items()))}
    _dump_json(out / "report.json", report)
    _snapshot(out, "distill", args, {"resolved": asdict(cfg), **_data_meta(Path(args.data))})
    print(f"student {cfg.label} weeks 1-{cfg.weeks}: test F1 {m.f1:.4f} -> {out}")


def cmd_grid_search(args) -> None:
    cfg = resolve_config(args)
    data = load_split(args.data, args.split)
    weeks = None if args.target == "teacher" else cfg.weeks
    best, table = ev.grid_search(data.X_train, data.y_train, folds=args.folds, base=train_part(cfg), weeks=weeks, seed=cfg.seed)
    rows = [{"cell": p.cell, "hidden": p.hidden, "lr": p.lr, "mean_val_f1": s} for p, s in table]
    result = {"split": args.split, "best": {"cell": best.cell, "hidden": best.hidden, "lr": best.lr}}
    if args.out:
        out = _out_dir(args.out)
        meta = {"split": args.split, "folds": args.folds, "target": args.target, "seed": cfg.seed, **_data_meta(Path(args.data))}
        _write_table(out, "grid", rows, meta)
        _dump_json(out / "best.json", result)
        _snapshot(out, "grid-search", args, {"resolved": asdict(cfg)})
    print(json.dumps(result, sort_keys=True))


def _suite_meta(args, cfg, data_dir) -> dict:
    return {"runs": args.runs, "base_seed": cfg.seed, "seeds": f"{cfg.seed}..{cfg.seed + args.runs - 1}",
            "config": asdict(cfg), **_data_meta(Path(data_dir))}


def cmd_baselines(args) -> None:
    cfg = resolve_config(args)
    data = load_split(args.data, args.split)
    weeks = _weeks_list(args.week_ranges)
    _check_weeks(weeks, data)
    teacher = _teacher_for(args, data, cfg)
    rows = ev.baseline_suite(data, teacher, weeks, args.runs, cfg.seed, train_part(cfg), cfg, jobs=args.jobs)
    out = _out_dir(args.out)
    _write_table(out, "baselines", rows, _suite_meta(args, cfg, args.data))
    _snapshot(out, "baselines", args, {"resolved": asdict(cfg)})
    print(ev.format_table(rows), end="")


def cmd_ablate(args) -> None:
    cfg = resolve_config(args)
    data = load_split(args.data, args.split)
    weeks = _weeks_list(args.week_ranges)
    _check_weeks(weeks, data)
    teacher = _teacher_for(args, data, cfg)
    rows = ev.ablation_suite(data, teacher, weeks, args.runs, cfg.seed, cfg, jobs=args.jobs)
    out = _out_dir(args.out)
    _write_table(out, "ablation", rows, _suite_meta(args, cfg, args.data))
    _snapshot(out, "ablate", args, {"resolved": asdict(cfg)})
    print(ev.format_table(rows), end="")


def cmd_teacher_report(args) -> None:
    cfg = resolve_config(args)
    data_dir = Path(args.data)
    names = [s.name for s in read_splits(data_dir)] if not args.split else [args.split]
    datasets = [load_split(data_dir, n) for n in names]
    teachers = [ev.fit_teacher(d, train_part(cfg)) for d in datasets]
    rows = ev.teacher_report(datasets, teachers)
    out = _out_dir(args.out)
    _write_table(out, "teachers", rows, {"seed": cfg.seed, "config": asdict(train_part(cfg)), **_data_meta(data_dir)})
    _snapshot(out, "teacher-report", args, {"resolved": asdict(train_part(cfg))})
    print(ev.format_table(rows), end="")


def cmd_evaluate(args) -> None:
    params, extra = load_checkpoint(args.model)
    data = load_split(args.data, args.split)
    n = params.config.seq_len
    _check_weeks([n], data)
    m = ev.evaluate(params, data.X_test[:, :n], data.y_test)
    result = {"split": args.split, "weeks": n, "model": params.config.arch, "role": extra.get("role"),
              "test": _metrics_dict(m)}
    text = json.dumps(_jsonable(result), indent=2, sort_keys=True) + "\n"
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
    print(text, end="")


# ----------------------------------------------------------------- parser


def _train_flags(p: argparse.ArgumentParser, distill: bool = False) -> None:
    p.add_argument("--config", help="YAML file of training settings")
    p.add_argument("--seed", type=int)
    p.add_argument("--cell", choices=("gru", "lstm"))
    p.add_argument("--hidden", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--l2", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--epochs", type=int)
    if distill:
        p.add_argument("--lambda", dest="lam", type=float)
        p.add_argument("--losses", help="comma list of hint,context,soft (or 'none')")


def _split_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="directory written by gen-data")
    p.add_argument("--split", required=True)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="earlykd", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic four-course benchmark")
    p.add_argument("--profile", help="profile YAML (default: the shipped profile)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("featurize", help="activity log + grades CSV -> SRP feature CSV")
    p.add_argument("--logs", required=True)
    p.add_argument("--grades", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--course-weeks", type=int, default=7)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train-teacher", help="train the full-length attention teacher")
    _split_flags(p)
    _train_flags(p)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.set_defaults(func=cmd_train_teacher)

    p = sub.add_parser("distill", help="distill a truncated-sequence student from a teacher")
    _split_flags(p)
    _train_flags(p, distill=True)
    p.add_argument("--teacher", required=True)
    p.add_argument("--weeks", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("grid-search", help="cross-validated hyperparameter grid")
    _split_flags(p)
    _train_flags(p, distill=True)
    p.add_argument("--weeks", type=int)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--target", choices=("student", "teacher"), default="student")
    p.add_argument("--out")
    p.set_defaults(func=cmd_grid_search)

    for name, func, helptext in (("baselines", cmd_baselines, "baselines vs. the distilled student"),
                                 ("ablate", cmd_ablate, "loss-subset ablation")):
        p = sub.add_parser(name, help=helptext)
        _split_flags(p)
        _train_flags(p, distill=True)
        p.add_argument("--teacher", help="teacher checkpoint (trained on the fly if absent)")
        p.add_argument("--runs", type=int, default=30)
        p.add_argument("--weeks", dest="week_ranges", default="3,4,5,6", help="comma list of week ranges")
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--out", required=True)
        p.set_defaults(func=func)

    p = sub.add_parser("teacher-report", help="teacher metrics on every split")
    p.add_argument("--data", required=True)
    p.add_argument("--split")
    _train_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_teacher_report)

    p = sub.add_parser("evaluate", help="metrics of a checkpoint on a split's test course")
    _split_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", help="write the JSON here as well")
    p.set_defaults(func=cmd_evaluate)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigError, FeatureError, ProfileError, ValueError, KeyError, OSError) as exc:
        print(f"earlykd: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - last-resort runtime failure
        log.debug("runtime failure", exc_info=True)
        print(f"earlykd: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
