import hashlib
import json
from pathlib import Path

import pytest

from earlykd.cli import build_parser, main, resolve_config

FAST = ["--epochs", "2", "--batch", "16", "--hidden", "3"]


def tree(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def digest(root: Path) -> str:
    h = hashlib.sha256()
    for k, v in tree(root).items():
        h.update(k.encode() + v)
    return h.hexdigest()


def pipeline(root: Path, data: Path) -> None:
    run = root / "run"
    assert main(["featurize", "--logs", str(data / "PT2020.activity.csv"), "--grades", str(data / "PT2020.grades.csv"),
                 "--out", str(run / "PT2020.features.csv")]) == 0
    assert main(["train-teacher", "--data", str(data), "--split", "T19P20", *FAST, "--out", str(run / "teacher.ckpt")]) == 0
    assert main(["distill", "--data", str(data), "--split", "T19P20", "--teacher", str(run / "teacher.ckpt"),
                 "--weeks", "3", "--epochs", "2", "--out", str(run / "student")]) == 0
    assert main(["evaluate", "--data", str(data), "--split", "T19P20", "--model", str(run / "student" / "student.ckpt"),
                 "--out", str(run / "eval.json")]) == 0
    for cmd in ("baselines", "ablate"):
        assert main([cmd, "--data", str(data), "--split", "T19P20", "--teacher", str(run / "teacher.ckpt"),
                     "--runs", "1", "--weeks", "3", *FAST, "--out", str(run / cmd)]) == 0
    assert main(["grid-search", "--data", str(data), "--split", "T19P20", "--folds", "2", "--target", "teacher",
                 "--epochs", "1", "--out", str(run / "grid")]) == 0


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    assert main(["gen-data", "--out", str(data), "--seed", "0"]) == 0
    return root, data


def test_gen_data_layout(workspace):
    _, data = workspace
    names = {p.name for p in data.iterdir()}
    for cid in ("PT2019", "PT2020", "PT2021", "PT2022"):
        assert {f"{cid}.activity.csv", f"{cid}.grades.csv"} <= names
    assert {"splits.json", "profile.yaml", "config.json"} <= names
    assert len(json.loads((data / "splits.json").read_text())) == 6


def test_pipeline_reruns_are_byte_identical(workspace, capsys):
    root, data = workspace
    before = digest(data)
    pipeline(root, data)
    first = tree(root / "run")
    pipeline(root, data)
    second = tree(root / "run")
    assert first.keys() == second.keys()
    assert [k for k in first if first[k] != second[k]] == []
    assert digest(data) == before  # inputs untouched
    report = json.loads(first["student/report.json"])
    assert report["weeks"] == 3 and report["config"] == "CV+HD+Soft"
    assert set(report["loss_calls"]) == {"hint", "context", "soft", "hard"}
    ev = json.loads(first["eval.json"])
    assert ev["test"] == report["test"]
    assert first["baselines/baselines.csv"].count(b"\n") > 7
    rows = [l for l in first["ablate/ablation.csv"].decode().splitlines() if not l.startswith("#")]
    assert len(rows) == 1 + 7
    cfg = json.loads(first["student/config.json"])
    assert cfg["command"] == "distill" and cfg["resolved"]["hidden"] == 3
    assert "teacher.config.json" in first and "PT2020.features.config.json" in first


def test_gen_data_rerun_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["gen-data", "--out", str(a), "--seed", "4"]) == 0
    assert main(["gen-data", "--out", str(b), "--seed", "4"]) == 0
    ta, tb = tree(a), tree(b)
    ta.pop("config.json"), tb.pop("config.json")  # records the differing --out
    assert ta == tb


def test_invalid_inputs_exit_one(workspace, tmp_path, capsys):
    root, data = workspace
    ckpt = root / "bad_teacher.ckpt"
    assert main(["train-teacher", "--data", str(data), "--split", "T19P20", "--epochs", "1", "--out", str(ckpt)]) == 0
    assert main(["distill", "--data", str(data), "--split", "T19P20", "--teacher", str(ckpt), "--weeks", "8",
                 "--out", str(tmp_path / "x")]) == 1
    assert "outside" in capsys.readouterr().err
    assert main(["train-teacher", "--data", str(data), "--split", "T99P00", "--out", str(tmp_path / "t.ckpt")]) == 1
    assert "unknown split" in capsys.readouterr().err
    assert main(["evaluate", "--data", str(tmp_path / "nope"), "--split", "T19P20", "--model", str(ckpt)]) == 1
    assert main(["train-teacher", "--data", str(data), "--split", "T19P20", "--lr", "-1", "--out", str(tmp_path / "t.ckpt")]) == 1
    assert main(["distill", "--data", str(data)]) == 1  # argparse usage error
    assert main(["distill", "--data", str(data), "--split", "T19P20", "--teacher", str(ckpt), "--losses", "hint,bogus",
                 "--out", str(tmp_path / "y")]) == 1


def test_config_precedence(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("hidden: 6\nlr: 0.005\nlambda: 0.3\nlosses: soft\n")
    args = build_parser().parse_args(["distill", "--data", "d", "--split", "s", "--teacher", "t", "--out", "o",
                                      "--config", str(cfg), "--lr", "0.02"])
    r = resolve_config(args)
    assert (r.hidden, r.lr, r.lam, r.epochs) == (6, 0.02, 0.3, 150)
    assert r.losses == ("soft",)
    cfg.write_text("hiden: 6\n")
    with pytest.raises(ValueError, match="unknown keys"):
        resolve_config(args)
