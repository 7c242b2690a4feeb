"""Teacher pretraining and three-phase distillation into a truncated-sequence student.

Each student epoch makes three passes over the same shuffled mini-batches:

1. hint pass: MSE between teacher and student final hidden states, updating
   only the student's encoder;
2. context pass: MSE between teacher and student context vectors, updating
   only the student's attention matrix;
3. KD pass: hard cross-entropy to the labels plus ``lam`` times the soft
   cross-entropy to the teacher's softmaxed logits, updating every group.

Passes 1 and 2 and the soft term are switchable (the ablation axes). The
teacher is frozen: its outputs on the full-length sequences are computed once
and treated as constants.
"""

from __future__ import annotations

import csv
import warnings
from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np

from . import numerics as nx
from .model import ForwardOutput, ModelConfig, ModelParams, backward_batch, forward_batch
from .numerics import AdamState, ShapeError, Tensor, adam_step


@dataclass(frozen=True)
class TrainConfig:
    cell: str = "gru"
    hidden: int = 4
    lr: float = 0.01
    l2: float = 1e-5
    batch: int = 8
    epochs: int = 150
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.l2 < 0:
            raise ValueError(f"l2 must be nonnegative, got {self.l2}")
        if self.batch < 1 or self.epochs < 1 or self.hidden < 1:
            raise ValueError("batch, epochs and hidden must be >= 1")


@dataclass(frozen=True)
class DistillConfig(TrainConfig):
    lam: float = 0.1
    use_hint: bool = True
    use_context: bool = True
    use_soft: bool = True
    weeks: int = 3

    def __post_init__(self):
        super().__post_init__()
        if self.lam < 0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")
        if self.weeks < 1:
            raise ValueError(f"weeks must be >= 1, got {self.weeks}")

    @property
    def label(self) -> str:
        parts = [name for flag, name in ((self.use_context, "CV"), (self.use_hint, "HD"), (self.use_soft, "Soft")) if flag]
        return "+".join(parts) if parts else "hard-only"

    @property
    def losses(self) -> tuple[str, ...]:
        return tuple(n for f, n in ((self.use_hint, "hint"), (self.use_context, "context"), (self.use_soft, "soft")) if f)

    @classmethod
    def from_losses(cls, spec: str, **kw) -> "DistillConfig":
        """Build from ``"hint,context,soft"`` style flags (empty or ``none`` for none)."""
        names = {s.strip() for s in spec.split(",") if s.strip() and s.strip() != "none"}
        unknown = names - {"hint", "context", "soft"}
        if unknown:
            raise ValueError(f"unknown loss flags {sorted(unknown)}; use hint, context, soft")
        return cls(use_hint="hint" in names, use_context="context" in names, use_soft="soft" in names, **kw)


@dataclass
class TrainedPair:
    teacher: ModelParams
    student: ModelParams
    trace: list[tuple[int, str, float]] = field(default_factory=list)
    loss_calls: Counter = field(default_factory=Counter)


# ----------------------------------------------------------------- per-example losses


def hint_loss(teacher_out: ForwardOutput, student_out: ForwardOutput) -> Tensor:
    ht, hs = teacher_out.final_hidden, student_out.final_hidden
    if ht.shape != hs.shape:
        raise ShapeError(f"hint loss: hidden sizes differ {ht.shape} vs {hs.shape}")
    return nx.mse(ht, hs)


def context_loss(teacher_out: ForwardOutput, student_out: ForwardOutput) -> Tensor:
    ct, cs = teacher_out.context, student_out.context
    if ct.shape != cs.shape:
        raise ShapeError(f"context loss: sizes differ {ct.shape} vs {cs.shape}")
    return nx.mse(ct, cs)


def _softmax(v: np.ndarray) -> np.ndarray:
    z = np.exp(v - v.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def distillation_loss(y_true, student_logits: Tensor, teacher_logits, lam: float) -> Tensor:
    """Hard CE to ``y_true`` plus ``lam`` times CE to softmax(teacher logits).

    Teacher logits are read as constants; no gradient reaches the teacher.
    """
    if lam < 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    hard = nx.cross_entropy(student_logits, Tensor(y_true))
    if lam == 0:
        return hard
    t = teacher_logits.data if isinstance(teacher_logits, Tensor) else np.asarray(teacher_logits, float)
    soft = nx.cross_entropy(student_logits, Tensor(_softmax(t)))
    return hard + lam * soft


# ----------------------------------------------------------------- batched losses


def batch_mse(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean over examples of per-example MSE, and its gradient wrt ``pred``."""
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def batch_cross_entropy(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy against probability rows ``targets`` and d/dlogits."""
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    B = logits.shape[0]
    loss = -float(np.sum(targets * logp)) / B
    return loss, (np.exp(logp) - targets) / B


def one_hot(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    out = np.zeros((y.size, 2))
    out[np.arange(y.size), y] = 1.0
    return out


# ----------------------------------------------------------------- single update steps


def hint_step(student: ModelParams, X, h_teacher, state: AdamState, lr: float, l2: float) -> float:
    """One encoder-only update on the hint loss. Returns the pre-update loss."""
    fw = forward_batch(student, X, upto="hidden")
    loss, g = batch_mse(fw.final_hidden, h_teacher)
    grad = backward_batch(student, fw, d_hidden=g, groups=("encoder",))
    sl = student.groups["encoder"]
    adam_step(student.flat[sl], grad[sl], state, lr, l2)
    return loss


def context_step(student: ModelParams, X, c_teacher, state: AdamState, lr: float, l2: float) -> float:
    """One attention-only update on the context-vector loss."""
    fw = forward_batch(student, X, upto="context")
    loss, g = batch_mse(fw.ctx, c_teacher)
    grad = backward_batch(student, fw, d_context=g, groups=("attention",))
    sl = student.groups["attention"]
    adam_step(student.flat[sl], grad[sl], state, lr, l2)
    return loss


def kd_step(student: ModelParams, X, y_onehot, p_teacher, lam: float, state: AdamState,
            lr: float, l2: float, calls: Counter | None = None) -> float:
    """One full-model update on hard CE (+ ``lam`` soft CE when ``p_teacher`` is given)."""
    fw = forward_batch(student, X)
    loss, g = batch_cross_entropy(fw.logits, y_onehot)
    if calls is not None:
        calls["hard"] += 1
    if p_teacher is not None and lam > 0:
        soft, gs = batch_cross_entropy(fw.logits, p_teacher)
        if calls is not None:
            calls["soft"] += 1
        loss += lam * soft
        g = g + lam * gs
    grad = backward_batch(student, fw, d_logits=g)
    adam_step(student.flat, grad, state, lr, l2)
    return loss


def _batches(rng: np.random.Generator, n: int, size: int) -> list[np.ndarray]:
    perm = rng.permutation(n)
    return [perm[i : i + size] for i in range(0, n, size)]


def _seeds(seed: int) -> tuple[np.random.SeedSequence, np.random.Generator]:
    init_ss, shuffle_ss = np.random.SeedSequence(seed).spawn(2)
    return init_ss, np.random.default_rng(shuffle_ss)


def _check_data(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 3 or len(X) == 0:
        raise ValueError(f"training data must be a nonempty (N, weeks, features) array, got {X.shape}")
    if y.shape != (len(X),):
        raise ValueError(f"{len(X)} sequences but {y.size} labels")
    if len(np.unique(y)) < 2:
        warnings.warn("training labels contain a single class", RuntimeWarning, stacklevel=3)
    return X, y


# ----------------------------------------------------------------- training loops


def train_classifier(model_cfg: ModelConfig, X, y, cfg: TrainConfig) -> tuple[ModelParams, list]:
    """Plain supervised training (hard CE + L2) of any architecture."""
    X, y = _check_data(X, y)
    init_ss, rng = _seeds(cfg.seed)
    params = ModelParams.init(model_cfg, init_ss)
    state = AdamState.zeros_like(params.flat)
    Y = one_hot(y)
    trace = []
    for epoch in range(cfg.epochs):
        losses = [kd_step(params, X[idx], Y[idx], None, 0.0, state, cfg.lr, cfg.l2) for idx in _batches(rng, len(X), cfg.batch)]
        trace.append((epoch + 1, "hard", float(np.mean(losses))))
    return params, trace


def train_teacher(X, y, cfg: TrainConfig) -> tuple[ModelParams, list]:
    """RNN-Attention teacher on full-length sequences."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3:
        raise ValueError(f"teacher data must be (N, weeks, features), got {X.shape}")
    mcfg = ModelConfig(cell=cfg.cell, hidden=cfg.hidden, features=X.shape[2], seq_len=X.shape[1])
    return train_classifier(mcfg, X, y, cfg)


@dataclass
class TeacherTargets:
    hidden: np.ndarray
    context: np.ndarray
    probs: np.ndarray

    @classmethod
    def compute(cls, teacher: ModelParams, X_full: np.ndarray) -> "TeacherTargets":
        fw = forward_batch(teacher, X_full)
        return cls(fw.final_hidden.copy(), fw.ctx.copy(), _softmax(fw.logits))


def distill_student(teacher: ModelParams, X_full, y, cfg: DistillConfig,
                    targets: TeacherTargets | None = None) -> TrainedPair:
    """Train a student on weeks ``1..cfg.weeks`` guided by the frozen ``teacher``."""
    X_full, y = _check_data(X_full, y)
    tcfg = teacher.config
    m = X_full.shape[1]
    if tcfg.arch != "attention":
        raise ValueError("the teacher must be an attention model")
    if cfg.weeks > m:
        raise ValueError(f"student weeks {cfg.weeks} exceed the {m} available weeks")
    if tcfg.cell != cfg.cell or tcfg.hidden != cfg.hidden or tcfg.features != X_full.shape[2]:
        raise ValueError(
            f"teacher/student mismatch: teacher {tcfg.cell}/{tcfg.hidden}/{tcfg.features}, "
            f"student {cfg.cell}/{cfg.hidden}/{X_full.shape[2]}"
        )
    if targets is None:
        targets = TeacherTargets.compute(teacher, X_full)
    scfg = replace(tcfg, seq_len=cfg.weeks)
    init_ss, rng = _seeds(cfg.seed)
    student = ModelParams.init(scfg, init_ss)
    Xs = np.ascontiguousarray(X_full[:, : cfg.weeks])
    Y = one_hot(y)
    enc_state = AdamState.zeros_like(student.group("encoder"))
    att_state = AdamState.zeros_like(student.group("attention"))
    all_state = AdamState.zeros_like(student.flat)
    calls: Counter = Counter()
    trace = []
    soft_targets = targets.probs if cfg.use_soft else None
    for epoch in range(1, cfg.epochs + 1):
        batches = _batches(rng, len(Xs), cfg.batch)
        if cfg.use_hint:
            losses = []
            for idx in batches:
                losses.append(hint_step(student, Xs[idx], targets.hidden[idx], enc_state, cfg.lr, cfg.l2))
                calls["hint"] += 1
            trace.append((epoch, "hint", float(np.mean(losses))))
        if cfg.use_context:
            losses = []
            for idx in batches:
                losses.append(context_step(student, Xs[idx], targets.context[idx], att_state, cfg.lr, cfg.l2))
                calls["context"] += 1
            trace.append((epoch, "context", float(np.mean(losses))))
        losses = [
            kd_step(student, Xs[idx], Y[idx], None if soft_targets is None else soft_targets[idx],
                    cfg.lam, all_state, cfg.lr, cfg.l2, calls)
            for idx in batches
        ]
        trace.append((epoch, "kd", float(np.mean(losses))))
    return TrainedPair(teacher, student, trace, calls)


def ablation_variants(base: DistillConfig | None = None) -> list[DistillConfig]:
    """The seven loss subsets compared in the ablation, hard CE always on."""
    base = base or DistillConfig()
    flags = [  # (context, hint, soft)
        (True, True, True),
        (True, False, True),
        (False, True, True),
        (True, True, False),
        (True, False, False),
        (False, True, False),
        (False, False, True),
    ]
    return [replace(base, use_context=c, use_hint=h, use_soft=s) for c, h, s in flags]


def write_trace(path, trace: list[tuple[int, str, float]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "phase", "loss"])
        for epoch, phase, loss in trace:
            w.writerow([epoch, phase, repr(float(loss))])
