"""RNN-Attention classifier and the baseline architectures built from the same parts.

Parameters live in one flat float64 vector. Named arrays are reshaped views
into it, and the three parameter groups (``encoder``, ``attention``,
``head``) are contiguous slices, so a staged update of one group is a single
optimizer call on a slice.

Two forward paths exist:

* :func:`forward` works on one sequence with :mod:`earlykd.numerics` tensors
  and exposes every intermediate. It is the readable reference.
* :func:`forward_batch` / :func:`backward_batch` run mini-batches through the
  compiled (or numpy fallback) kernels and are what training uses.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from . import numerics as nx
from .attention import AttentionOutput, AttentionParams, attend
from .numerics import ShapeError, Tensor
from .recurrent import GATES, CellParams, HiddenTrajectory, encode, xavier_gates

ARCHS = ("attention", "recurrent", "bidirectional", "mlp")
GROUPS = ("encoder", "attention", "head")


@dataclass(frozen=True)
class ModelConfig:
    cell: str = "gru"
    hidden: int = 4
    features: int = 12
    classes: int = 2
    seq_len: int = 7
    arch: str = "attention"

    def __post_init__(self):
        if self.cell not in GATES:
            raise ValueError(f"unknown cell {self.cell!r}; choose from {sorted(GATES)}")
        if self.arch not in ARCHS:
            raise ValueError(f"unknown arch {self.arch!r}; choose from {ARCHS}")
        if self.hidden < 1 or self.features < 1 or self.seq_len < 1:
            raise ValueError(f"sizes must be positive: {self}")
        if self.classes != 2:
            raise ValueError("only binary (at-risk / not at-risk) output is supported")

    @property
    def head_input(self) -> int:
        if self.arch == "mlp":
            return self.seq_len * self.features
        if self.arch == "bidirectional":
            return 2 * self.hidden
        return self.hidden

    def same_shapes(self, other: "ModelConfig") -> bool:
        """True when two configs differ at most in sequence length (non-MLP)."""
        keys = ("cell", "hidden", "features", "classes", "arch")
        return all(getattr(self, k) == getattr(other, k) for k in keys) and self.arch != "mlp"


def _layout(cfg: ModelConfig) -> list[tuple[str, str, tuple[int, ...]]]:
    k, r = cfg.features, cfg.hidden
    gr = GATES[cfg.cell] * r
    entries = []
    if cfg.arch != "mlp":
        directions = ("encoder", "encoder_rev") if cfg.arch == "bidirectional" else ("encoder",)
        for d in directions:
            entries += [(f"{d}.Wx", "encoder", (k, gr)), (f"{d}.Wh", "encoder", (r, gr)), (f"{d}.b", "encoder", (gr,))]
    if cfg.arch == "attention":
        entries.append(("attention.W", "attention", (r, r)))
    entries += [
        ("head.W1", "head", (cfg.head_input, r)),
        ("head.b1", "head", (r,)),
        ("head.W2", "head", (r, cfg.classes)),
        ("head.b2", "head", (cfg.classes,)),
    ]
    return entries


class ModelParams:
    """Flat parameter store with named views and contiguous group slices."""

    def __init__(self, config: ModelConfig, flat: np.ndarray | None = None):
        self.config = config
        self.layout = _layout(config)
        self.names = [name for name, _, _ in self.layout]
        total = sum(int(np.prod(shape)) for _, _, shape in self.layout)
        if flat is None:
            flat = np.zeros(total)
        flat = np.ascontiguousarray(flat, dtype=np.float64)
        if flat.shape != (total,):
            raise ShapeError(f"flat parameter vector has {flat.size} values, layout needs {total}")
        self.flat = flat
        self.arrays: dict[str, np.ndarray] = {}
        self.groups: dict[str, slice] = {}
        pos = 0
        for name, group, shape in self.layout:
            size = int(np.prod(shape))
            self.arrays[name] = flat[pos : pos + size].reshape(shape)
            start = self.groups[group].start if group in self.groups else pos
            self.groups[group] = slice(start, pos + size)
            pos += size
        for g in GROUPS:
            self.groups.setdefault(g, slice(pos, pos))

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def __len__(self) -> int:
        return self.flat.size

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, self.flat.copy())

    def group(self, name: str) -> np.ndarray:
        return self.flat[self.groups[name]]

    @classmethod
    def init(cls, config: ModelConfig, seed: int) -> "ModelParams":
        """Glorot-uniform weights (per gate block), zero biases; seeded."""
        rng = np.random.default_rng(seed)
        p = cls(config)
        directions = [d for d in ("encoder", "encoder_rev") if f"{d}.Wx" in p.arrays]
        for d in directions:
            Wx, Wh = xavier_gates(config.cell, config.features, config.hidden, rng)
            p[f"{d}.Wx"][...] = Wx
            p[f"{d}.Wh"][...] = Wh
        r = config.hidden
        if "attention.W" in p.arrays:
            bound = np.sqrt(6.0 / (2 * r))
            p["attention.W"][...] = rng.uniform(-bound, bound, (r, r))
        for name in ("head.W1", "head.W2"):
            fan_in, fan_out = p[name].shape
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            p[name][...] = rng.uniform(-bound, bound, (fan_in, fan_out))
        return p


def param_groups(params: ModelParams) -> dict[str, list[str]]:
    """Partition of parameter names into the ``encoder``/``attention``/``head`` groups."""
    out: dict[str, list[str]] = {g: [] for g in GROUPS}
    for name, group, _ in params.layout:
        out[group].append(name)
    return out


# --------------------------------------------------------------------------- tensor path


@dataclass
class ForwardOutput:
    trajectory: HiddenTrajectory | None
    attention_out: AttentionOutput | None
    logits: Tensor
    tensors: dict[str, Tensor] = field(default_factory=dict, repr=False)

    @property
    def final_hidden(self) -> Tensor:
        return self.trajectory.last

    @property
    def context(self) -> Tensor:
        return self.attention_out.context


def as_tensors(params: ModelParams, requires_grad: bool = False) -> dict[str, Tensor]:
    return {name: Tensor(arr, requires_grad=requires_grad) for name, arr in params.arrays.items()}


def forward(params: ModelParams, sequence, tensors: dict[str, Tensor] | None = None) -> ForwardOutput:
    """Single-sequence forward pass returning every intermediate.

    ``tensors`` lets a caller supply leaf tensors (e.g. with ``requires_grad``)
    instead of constants built from ``params``.
    """
    cfg = params.config
    seq = sequence if isinstance(sequence, Tensor) else Tensor(np.asarray(sequence, dtype=float))
    if seq.data.ndim != 2 or seq.shape[1] != cfg.features or seq.shape[0] < 1:
        raise ShapeError(f"sequence must be (n>=1, {cfg.features}), got {seq.shape}")
    t = tensors if tensors is not None else as_tensors(params)

    def cell(prefix):
        return CellParams(cfg.cell, t[f"{prefix}.Wx"], t[f"{prefix}.Wh"], t[f"{prefix}.b"])

    traj, att = None, None
    if cfg.arch == "mlp":
        if seq.shape[0] != cfg.seq_len:
            raise ShapeError(f"mlp expects exactly {cfg.seq_len} weeks, got {seq.shape[0]}")
        z = seq.reshape(cfg.seq_len * cfg.features)
    else:
        traj = encode(cell("encoder"), seq)
        if cfg.arch == "attention":
            att = attend(traj, AttentionParams(t["attention.W"]))
            z = att.context
        elif cfg.arch == "recurrent":
            z = traj.last
        else:
            rows = [seq[i] for i in range(seq.shape[0])]
            rev = encode(cell("encoder_rev"), rows[::-1])
            z = nx.concat([traj.last, rev.last])
    hidden = nx.tanh(z @ t["head.W1"] + t["head.b1"])
    logits = hidden @ t["head.W2"] + t["head.b2"]
    return ForwardOutput(traj, att, logits, t)


def predict_label(logits) -> int:
    """Argmax over two logits; index 1 is at-risk. Exact ties predict 0."""
    v = logits.data if isinstance(logits, Tensor) else np.asarray(logits, dtype=float)
    return int(v[1] > v[0])


# --------------------------------------------------------------------------- batched kernels


@dataclass
class BatchForward:
    X: np.ndarray
    enc: tuple | None = None
    enc_rev: tuple | None = None
    alpha: np.ndarray | None = None
    ctx: np.ndarray | None = None
    Z: np.ndarray | None = None
    A: np.ndarray | None = None
    logits: np.ndarray | None = None

    @property
    def states(self) -> np.ndarray:
        """Hidden states h_1..h_n as ``(B, n, r)``."""
        return self.enc[0][:, 1:]

    @property
    def final_hidden(self) -> np.ndarray:
        return self.enc[0][:, -1]


def _check_batch(cfg: ModelConfig, X: np.ndarray) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 3 or X.shape[2] != cfg.features or X.shape[1] < 1:
        raise ShapeError(f"batch must be (B, n>=1, {cfg.features}), got {X.shape}")
    if cfg.arch == "mlp" and X.shape[1] != cfg.seq_len:
        raise ShapeError(f"mlp expects exactly {cfg.seq_len} weeks, got {X.shape[1]}")
    return X


def forward_batch(params: ModelParams, X: np.ndarray, upto: str = "logits", backend=None) -> BatchForward:
    """Batched forward through ``hidden``, ``context`` or ``logits``."""
    kb = backend or kernels.backend
    cfg = params.config
    X = _check_batch(cfg, X)
    out = BatchForward(X)
    code = kernels.CELL_CODES[cfg.cell]
    if cfg.arch != "mlp":
        out.enc = kb.encode_forward(code, X, params["encoder.Wx"], params["encoder.Wh"], params["encoder.b"])
        if upto == "hidden":
            return out
    if cfg.arch == "attention":
        out.alpha, out.ctx = kb.attention_forward(np.ascontiguousarray(out.states), params["attention.W"])
        if upto == "context":
            return out
        out.Z = out.ctx
    elif cfg.arch == "recurrent":
        out.Z = np.ascontiguousarray(out.final_hidden)
    elif cfg.arch == "bidirectional":
        Xr = np.ascontiguousarray(X[:, ::-1])
        out.enc_rev = kb.encode_forward(code, Xr, params["encoder_rev.Wx"], params["encoder_rev.Wh"], params["encoder_rev.b"])
        out.Z = np.ascontiguousarray(np.concatenate([out.final_hidden, out.enc_rev[0][:, -1]], axis=1))
    else:
        out.Z = X.reshape(X.shape[0], -1)
    out.A, out.logits = kb.head_forward(out.Z, params["head.W1"], params["head.b1"], params["head.W2"], params["head.b2"])
    return out


def backward_batch(
    params: ModelParams,
    fw: BatchForward,
    d_hidden: np.ndarray | None = None,
    d_context: np.ndarray | None = None,
    d_logits: np.ndarray | None = None,
    groups: tuple[str, ...] = GROUPS,
    backend=None,
) -> np.ndarray:
    """Gradient (flat, same layout as ``params.flat``) of a loss given its
    upstream gradients on the final hidden state, the context vector and/or
    the logits. Work for groups outside ``groups`` is skipped where possible;
    their gradient entries are then incomplete and must not be used."""
    kb = backend or kernels.backend
    cfg = params.config
    grad = ModelParams(cfg)
    X = fw.X
    B, n, _ = X.shape
    r = cfg.hidden
    want_enc = "encoder" in groups and cfg.arch != "mlp"
    dH = np.zeros((B, n, r)) if want_enc else None
    dH_rev = None
    d_ctx = None if d_context is None else np.array(d_context, dtype=np.float64)

    if d_logits is not None:
        dZ = kb.head_backward(
            fw.Z, params["head.W1"], params["head.W2"], fw.A, np.ascontiguousarray(d_logits, dtype=np.float64),
            grad["head.W1"], grad["head.b1"], grad["head.W2"], grad["head.b2"],
            want_dz=cfg.arch != "mlp" and ("encoder" in groups or "attention" in groups),
        )
        if dZ is not None:
            if cfg.arch == "attention":
                d_ctx = dZ if d_ctx is None else d_ctx + dZ
            elif cfg.arch == "recurrent":
                if want_enc:
                    dH[:, -1] += dZ
            elif want_enc:
                dH[:, -1] += dZ[:, :r]
                dH_rev = np.zeros((B, n, r))
                dH_rev[:, -1] = dZ[:, r:]
    if d_ctx is not None and cfg.arch == "attention":
        kb.attention_backward(
            np.ascontiguousarray(fw.states), params["attention.W"], fw.alpha, np.ascontiguousarray(d_ctx),
            dH, grad["attention.W"],
        )
    if d_hidden is not None and want_enc:
        dH[:, -1] += d_hidden
    if want_enc:
        code = kernels.CELL_CODES[cfg.cell]
        H, C, G = fw.enc
        kb.encode_backward(code, X, params["encoder.Wh"], H, C, G, dH, grad["encoder.Wx"], grad["encoder.Wh"], grad["encoder.b"])
        if dH_rev is not None:
            H, C, G = fw.enc_rev
            kb.encode_backward(
                code, np.ascontiguousarray(X[:, ::-1]), params["encoder_rev.Wh"], H, C, G, dH_rev,
                grad["encoder_rev.Wx"], grad["encoder_rev.Wh"], grad["encoder_rev.b"],
            )
    return grad.flat


def predict_proba(params: ModelParams, X: np.ndarray) -> np.ndarray:
    logits = forward_batch(params, X).logits
    z = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(z)
    return p / p.sum(axis=1, keepdims=True)


def predict_labels(params: ModelParams, X: np.ndarray) -> np.ndarray:
    logits = forward_batch(params, X).logits
    return (logits[:, 1] > logits[:, 0]).astype(np.int64)


# --------------------------------------------------------------------------- checkpoints

_MAGIC = b"EARLYKD-CKPT\x01"


def save_checkpoint(path, params: ModelParams, extra: dict | None = None) -> None:
    """Write a JSON header (config + array manifest) followed by raw little-endian float64."""
    header = {
        "config": asdict(params.config),
        "arrays": [{"name": n, "group": g, "shape": list(s)} for n, g, s in params.layout],
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(params.flat.astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    raw = Path(path).read_bytes()
    if not raw.startswith(_MAGIC):
        raise ValueError(f"{path}: not an earlykd checkpoint")
    pos = len(_MAGIC)
    (size,) = struct.unpack("<Q", raw[pos : pos + 8])
    pos += 8
    header = json.loads(raw[pos : pos + size])
    pos += size
    cfg = ModelConfig(**header["config"])
    flat = np.frombuffer(raw[pos:], dtype="<f8").astype(np.float64)
    params = ModelParams(cfg, flat)
    expected = [[n, g, list(s)] for n, g, s in params.layout]
    got = [[a["name"], a["group"], a["shape"]] for a in header["arrays"]]
    if expected != got:
        raise ValueError(f"{path}: array manifest does not match config {cfg}")
    return params, header.get("extra", {})
