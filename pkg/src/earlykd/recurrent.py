"""Recurrent cells (vanilla RNN, GRU, LSTM) and sequence encoders.

Weights are stored gate-stacked: ``Wx`` is ``(k, G*r)``, ``Wh`` is ``(r, G*r)``
and ``b`` is ``(G*r,)`` with gate blocks ordered

* vanilla: ``[a]``
* gru: ``[update z, reset r, candidate n]``
* lstm: ``[input i, forget f, output o, candidate g]``

The GRU applies the reset gate to the previous state before the candidate
projection::

    z = sigmoid(x Wxz + h Whz + bz)
    r = sigmoid(x Wxr + h Whr + br)
    n = tanh(x Wxn + (r * h) Whn + bn)
    h' = z * h + (1 - z) * n
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .numerics import ShapeError, Tensor

GATES = {"vanilla": 1, "gru": 3, "lstm": 4}


@dataclass
class CellParams:
    kind: str
    Wx: Tensor
    Wh: Tensor
    b: Tensor

    def __post_init__(self):
        if self.kind not in GATES:
            raise ValueError(f"unknown cell kind {self.kind!r}; expected one of {sorted(GATES)}")
        g = GATES[self.kind]
        k, gr = self.Wx.shape
        r = self.Wh.shape[0]
        if gr != g * r or self.Wh.shape != (r, g * r) or self.b.shape != (g * r,):
            raise ShapeError(
                f"{self.kind} cell: inconsistent shapes Wx{self.Wx.shape} Wh{self.Wh.shape} b{self.b.shape}"
            )

    @property
    def input_size(self) -> int:
        return self.Wx.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.Wh.shape[0]

    @classmethod
    def init(cls, kind: str, input_size: int, hidden_size: int, rng: np.random.Generator,
             requires_grad: bool = True) -> "CellParams":
        """Glorot-uniform per gate block, zero biases."""
        Wx, Wh = xavier_gates(kind, input_size, hidden_size, rng)
        b = np.zeros(GATES[kind] * hidden_size)
        return cls(kind, Tensor(Wx, requires_grad), Tensor(Wh, requires_grad), Tensor(b, requires_grad))

    def tensors(self) -> list[Tensor]:
        return [self.Wx, self.Wh, self.b]


def xavier_gates(kind: str, k: int, r: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    g = GATES[kind]
    bx = np.sqrt(6.0 / (k + r))
    bh = np.sqrt(6.0 / (r + r))
    Wx = np.concatenate([rng.uniform(-bx, bx, (k, r)) for _ in range(g)], axis=1)
    Wh = np.concatenate([rng.uniform(-bh, bh, (r, r)) for _ in range(g)], axis=1)
    return Wx, Wh


@dataclass
class HiddenTrajectory:
    hidden: list[Tensor]
    cells: list[Tensor] | None = None

    def __len__(self) -> int:
        return len(self.hidden)

    @property
    def last(self) -> Tensor:
        return self.hidden[-1]

    def matrix(self) -> Tensor:
        """States stacked as an ``(n, r)`` tensor."""
        return nx.stack(self.hidden)


def cell_step(params: CellParams, h_prev: Tensor, x: Tensor, c_prev: Tensor | None = None):
    """Advance one step. Returns ``h_next`` or, for LSTM, ``(h_next, c_next)``."""
    k, r = params.input_size, params.hidden_size
    if x.shape != (k,):
        raise ShapeError(f"cell_step: input has shape {x.shape}, expected ({k},)")
    if h_prev.shape != (r,):
        raise ShapeError(f"cell_step: hidden state has shape {h_prev.shape}, expected ({r},)")
    xw = x @ params.Wx + params.b
    if params.kind == "vanilla":
        return nx.tanh(xw + h_prev @ params.Wh)
    if params.kind == "gru":
        hw = h_prev @ params.Wh[:, : 2 * r]
        z = nx.sigmoid(xw[:r] + hw[:r])
        rr = nx.sigmoid(xw[r : 2 * r] + hw[r:])
        cand = nx.tanh(xw[2 * r :] + (rr * h_prev) @ params.Wh[:, 2 * r :])
        return z * h_prev + (1.0 - z) * cand
    if c_prev is None:
        raise ValueError("lstm cell_step needs the previous cell state")
    if c_prev.shape != (r,):
        raise ShapeError(f"cell_step: cell state has shape {c_prev.shape}, expected ({r},)")
    a = xw + h_prev @ params.Wh
    i = nx.sigmoid(a[:r])
    f = nx.sigmoid(a[r : 2 * r])
    o = nx.sigmoid(a[2 * r : 3 * r])
    g = nx.tanh(a[3 * r :])
    c = f * c_prev + i * g
    return o * nx.tanh(c), c


def _rows(sequence) -> list[Tensor]:
    if isinstance(sequence, Tensor):
        if sequence.data.ndim != 2:
            raise ShapeError(f"sequence must be (n, k), got {sequence.shape}")
        return [sequence[i] for i in range(sequence.shape[0])]
    return [s if isinstance(s, Tensor) else Tensor(s) for s in sequence]


def encode(params: CellParams, sequence, h0: Tensor | None = None) -> HiddenTrajectory:
    """Run the cell over ``sequence`` (an ``(n, k)`` tensor/array or list of k-vectors)."""
    if not isinstance(sequence, Tensor) and isinstance(sequence, np.ndarray):
        sequence = Tensor(sequence)
    xs = _rows(sequence)
    if not xs:
        raise ValueError("encode: empty sequence")
    r = params.hidden_size
    h = h0 if h0 is not None else nx.zeros(r)
    c = nx.zeros(r) if params.kind == "lstm" else None
    hs, cs = [], []
    for x in xs:
        if c is None:
            h = cell_step(params, h, x)
        else:
            h, c = cell_step(params, h, x, c)
            cs.append(c)
        hs.append(h)
    return HiddenTrajectory(hs, cs if params.kind == "lstm" else None)


def encode_bidirectional(params_fwd: CellParams, params_bwd: CellParams, sequence) -> Tensor:
    """Concatenate the forward final state with the reverse pass's state at x_1."""
    if params_fwd.kind != params_bwd.kind:
        raise ValueError(f"bidirectional cells differ in kind: {params_fwd.kind} vs {params_bwd.kind}")
    if params_fwd.hidden_size != params_bwd.hidden_size:
        raise ShapeError("bidirectional cells differ in hidden size")
    if isinstance(sequence, np.ndarray):
        sequence = Tensor(sequence)
    xs = _rows(sequence)
    fwd = encode(params_fwd, xs)
    bwd = encode(params_bwd, xs[::-1])
    return nx.concat([fwd.last, bwd.last])
