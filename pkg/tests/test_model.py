import numpy as np
import pytest

from earlykd.model import (
    ModelConfig,
    ModelParams,
    forward,
    load_checkpoint,
    param_groups,
    predict_label,
    predict_labels,
    save_checkpoint,
)
from earlykd.numerics import ShapeError

from .oracles import model_scalar

ARCHS = ("attention", "recurrent", "bidirectional", "mlp")


def make(arch="attention", cell="gru", n=7, r=4, seed=0):
    return ModelParams.init(ModelConfig(cell=cell, hidden=r, seq_len=n, arch=arch), seed)


def test_group_sizes_for_default_config():
    p = make()
    sizes = {g: p.group(g).size for g in ("encoder", "attention", "head")}
    assert sizes == {"encoder": 204, "attention": 16, "head": 30}
    assert len(p) == 250


@pytest.mark.parametrize("arch", ARCHS)
def test_groups_partition_every_parameter(arch):
    p = make(arch)
    groups = param_groups(p)
    names = [n for g in groups.values() for n in g]
    assert sorted(names) == sorted(p.names) and len(set(names)) == len(names)
    covered = np.zeros(len(p), dtype=int)
    for sl in p.groups.values():
        covered[sl] += 1
    assert np.all(covered == 1)


def test_updating_encoder_leaves_attention_untouched():
    p = make()
    before = p.group("attention").tobytes(), p.group("head").tobytes()
    p.flat[p.groups["encoder"]] += 0.5
    assert (p.group("attention").tobytes(), p.group("head").tobytes()) == before


def test_head_width_equals_hidden_size():
    for r in (4, 6, 8, 10):
        p = make(r=r)
        assert p["head.W1"].shape == (r, r) and p["head.W2"].shape == (r, 2)


def test_zero_network_gives_zero_logits():
    p = ModelParams(ModelConfig())
    out = forward(p, np.random.default_rng(0).random((7, 12)))
    assert np.array_equal(out.logits.data, [0.0, 0.0])


@pytest.mark.parametrize("n", [3, 4, 5, 6, 7])
def test_logits_shape(n):
    out = forward(make(n=n), np.random.default_rng(n).random((n, 12)))
    assert out.logits.shape == (2,)
    assert out.attention_out.weights.shape == (n,)


@pytest.mark.parametrize("arch", ARCHS)
@pytest.mark.parametrize("cell", ["vanilla", "gru", "lstm"])
def test_forward_matches_composed_scalar_oracle(arch, cell):
    p = make(arch, cell, seed=3)
    p.flat[...] += np.random.default_rng(1).normal(scale=0.2, size=len(p))
    seq = np.random.default_rng(2).random((7, 12))
    want = model_scalar(p, seq)
    assert np.max(np.abs(forward(p, seq).logits.data - want)) < 1e-12
    assert np.max(np.abs(predict_labels(p, seq[None]) - int(want[1] > want[0]))) == 0


def test_forward_deterministic_and_dimension_checked():
    p = make()
    seq = np.random.default_rng(0).random((7, 12))
    assert forward(p, seq).logits.data.tobytes() == forward(p, seq).logits.data.tobytes()
    with pytest.raises(ShapeError):
        forward(p, np.zeros((7, 11)))
    with pytest.raises(ShapeError):
        forward(make("mlp", n=3), np.zeros((4, 12)))


def test_truncation_consistency():
    p = make()
    seq = np.random.default_rng(5).random((7, 12))
    full = forward(p, seq).trajectory.matrix().data
    short = forward(ModelParams(ModelConfig(seq_len=3), p.flat.copy()), seq[:3]).trajectory.matrix().data
    assert short.tobytes() == full[:3].tobytes()


def test_teacher_student_shapes_agree():
    t, s = ModelConfig(seq_len=7), ModelConfig(seq_len=3)
    assert t.same_shapes(s)
    assert [x[2] for x in ModelParams(t).layout] == [x[2] for x in ModelParams(s).layout]


def test_predict_label_tie_break():
    assert predict_label([0.2, 0.9]) == 1
    assert predict_label([0.9, 0.2]) == 0
    assert predict_label([0.4, 0.4]) == 0


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(classes=5)
    with pytest.raises(ValueError):
        ModelConfig(cell="transformer")
    with pytest.raises(ValueError):
        ModelConfig(arch="cnn")


def test_init_seeded():
    assert make(seed=4).flat.tobytes() == make(seed=4).flat.tobytes()
    assert make(seed=4).flat.tobytes() != make(seed=5).flat.tobytes()
    assert np.all(make().group("attention") != 0) and np.all(make()["encoder.b"] == 0)


@pytest.mark.parametrize("arch", ARCHS)
def test_checkpoint_round_trip_is_bit_exact(tmp_path, arch):
    p = make(arch, "lstm", n=5, r=6, seed=8)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, p, {"role": "test", "note": [1, 2]})
    q, extra = load_checkpoint(path)
    assert q.config == p.config and q.flat.tobytes() == p.flat.tobytes()
    assert extra == {"role": "test", "note": [1, 2]}
    save_checkpoint(tmp_path / "again.ckpt", q, extra)
    assert (tmp_path / "again.ckpt").read_bytes() == path.read_bytes()


def test_checkpoint_rejects_foreign_file(tmp_path):
    bad = tmp_path / "x.ckpt"
    bad.write_bytes(b"not a checkpoint")
    with pytest.raises(ValueError):
        load_checkpoint(bad)
