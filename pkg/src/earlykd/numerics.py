"""Small dense-tensor library with tape-based reverse-mode differentiation.

Tensors wrap 64-bit numpy arrays. Every differentiable operation executed on a
tensor that requires gradients is appended to the active :class:`Tape`; calling
:func:`backward` on a scalar result walks that tape once, in exact reverse
order, and accumulates ``.grad`` on the leaf tensors.

The op set is deliberately small: what the recurrent cells, the attention
block, the classifier head and the three distillation losses need.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class TapeError(RuntimeError):
    """Invalid use of the computation record (replayed, or detached loss)."""


@dataclass
class _Record:
    output: "Tensor"
    inputs: tuple["Tensor", ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class Tape:
    """Ordered record of executed operations; supports a single reverse pass."""

    records: list[_Record] = field(default_factory=list)
    consumed: bool = False

    def __len__(self) -> int:
        return len(self.records)


_local = threading.local()


def _tape_stack() -> list[Tape]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = [Tape()]
    return stack


def current_tape() -> Tape | None:
    if getattr(_local, "no_grad", 0):
        return None
    return _tape_stack()[-1]


@contextmanager
def recording() -> Iterator[Tape]:
    """Record operations on a fresh tape for the duration of the block."""
    tape = Tape()
    stack = _tape_stack()
    stack.append(tape)
    try:
        yield tape
    finally:
        stack.remove(tape)


@contextmanager
def no_grad() -> Iterator[None]:
    _local.no_grad = getattr(_local, "no_grad", 0) + 1
    try:
        yield
    finally:
        _local.no_grad -= 1


class Tensor:
    """Dense float64 array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "_tape", "_is_leaf")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=DTYPE, copy=True)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._tape: Tape | None = None
        self._is_leaf = True

    # ---- introspection
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_item(self)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    # ---- operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self):
        return tsum(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def _raise_item(t: Tensor):
    raise ShapeError(f"item() needs a single-element tensor, got shape {t.shape}")


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def zeros(*shape: int, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=requires_grad)


def _lift(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if np.isscalar(x) and like is not None:
        return Tensor(np.full(like.shape, float(x)))
    return Tensor(x)


def _emit(data: np.ndarray, inputs: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = np.asarray(data, dtype=DTYPE)
    out.grad = None
    out._is_leaf = False
    out._tape = None
    tape = current_tape() if any(t.requires_grad for t in inputs) else None
    out.requires_grad = tape is not None
    if out.requires_grad:
        out._tape = tape
        tape.records.append(_Record(out, inputs, backward))
    return out


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = _lift(a, b if isinstance(b, Tensor) else None), _lift(b, a if isinstance(a, Tensor) else None)
    _same_shape("add", a, b)
    return _emit(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = _lift(a, b if isinstance(b, Tensor) else None), _lift(b, a if isinstance(a, Tensor) else None)
    _same_shape("sub", a, b)
    return _emit(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a, b = _lift(a, b if isinstance(b, Tensor) else None), _lift(b, a if isinstance(a, Tensor) else None)
    _same_shape("mul", a, b)
    ad, bd = a.data, b.data
    return _emit(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # exp(-|x|) never overflows; both branches use it
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.data)
    return _emit(s, (a,), lambda g: (g * s * (1.0 - s),))


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    return _emit(t, (a,), lambda g: (g * (1.0 - t * t),))


def elementwise(op: str, *operands) -> Tensor:
    """Dispatch by name: ``add``, ``sub``, ``mul``, ``sigmoid`` or ``tanh``."""
    table = {"add": add, "sub": sub, "mul": mul, "sigmoid": sigmoid, "tanh": tanh}
    try:
        fn = table[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}") from None
    return fn(*operands)


# ---------------------------------------------------------------- structural


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product for 2-D operands; 1-D operands act as row/column vectors."""
    if a.data.ndim not in (1, 2) or b.data.ndim not in (1, 2):
        raise ShapeError(f"matmul: expected 1-D or 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ for {a.shape} and {b.shape}")
    ad, bd = a.data, b.data
    a2 = ad.reshape(1, -1) if ad.ndim == 1 else ad
    b2 = bd.reshape(-1, 1) if bd.ndim == 1 else bd

    def backward(g):
        g2 = g.reshape(a2.shape[0], b2.shape[1])
        return (g2 @ b2.T).reshape(ad.shape), (a2.T @ g2).reshape(bd.shape)

    return _emit(ad @ bd, (a, b), backward)


def getitem(a: Tensor, index) -> Tensor:
    shape = a.shape

    def backward(g):
        full = np.zeros(shape)
        np.add.at(full, index, g)
        return (full,)

    return _emit(a.data[index], (a,), backward)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = a.shape
    return _emit(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def stack(tensors: Sequence[Tensor]) -> Tensor:
    """Stack equally shaped tensors along a new leading axis."""
    if not tensors:
        raise ShapeError("stack: empty input")
    for t in tensors[1:]:
        _same_shape("stack", tensors[0], t)
    data = np.stack([t.data for t in tensors])
    return _emit(data, tuple(tensors), lambda g: tuple(g[i] for i in range(len(tensors))))


def concat(tensors: Sequence[Tensor]) -> Tensor:
    """Concatenate 1-D tensors."""
    if not tensors:
        raise ShapeError("concat: empty input")
    if any(t.data.ndim != 1 for t in tensors):
        raise ShapeError("concat: only 1-D tensors are supported")
    cuts = np.cumsum([t.size for t in tensors])[:-1]
    return _emit(
        np.concatenate([t.data for t in tensors]),
        tuple(tensors),
        lambda g: tuple(np.split(g, cuts)),
    )


def tsum(a: Tensor) -> Tensor:
    shape = a.shape
    return _emit(np.array(a.data.sum()), (a,), lambda g: (np.full(shape, float(g)),))


# ---------------------------------------------------------------- softmax & losses


def _softmax(v: np.ndarray) -> np.ndarray:
    z = np.exp(v - v.max())
    return z / z.sum()


def stable_softmax(v: Tensor) -> Tensor:
    if v.data.ndim != 1:
        raise ShapeError(f"stable_softmax expects a vector, got shape {v.shape}")
    if v.size == 0:
        raise ShapeError("stable_softmax of an empty vector")
    p = _softmax(v.data)
    return _emit(p, (v,), lambda g: (p * (g - np.dot(g, p)),))


def mse(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mse", a, b)
    diff = a.data - b.data
    n = diff.size
    val = np.array(np.sum(diff * diff) / n)
    return _emit(val, (a, b), lambda g: (2.0 * g * diff / n, -2.0 * g * diff / n))


def _log_softmax(v: np.ndarray) -> np.ndarray:
    shifted = v - v.max()
    return shifted - np.log(np.exp(shifted).sum())


def cross_entropy(logits: Tensor, target: Tensor, atol: float = 1e-9) -> Tensor:
    """``-sum(target * log_softmax(logits))`` for a single example.

    ``target`` may be one-hot or any probability vector. Gradients flow into
    both arguments; pass a detached target when it must stay constant.
    """
    target = _lift(target)
    _same_shape("cross_entropy", logits, target)
    t = target.data
    if np.any(t < 0) or abs(t.sum() - 1.0) > atol:
        raise ValueError(f"cross_entropy: target is not a probability vector: {t}")
    logp = _log_softmax(logits.data)
    p = np.exp(logp)
    val = np.array(-np.dot(t, logp))
    return _emit(val, (logits, target), lambda g: (g * (p * t.sum() - t), -g * logp))


# ---------------------------------------------------------------- reverse pass


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf requiring grad."""
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad or loss._tape is None:
        raise TapeError("backward on a detached value (no recorded computation)")
    tape = loss._tape
    if tape.consumed:
        raise TapeError("computation record already replayed; run a new forward pass")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for rec in reversed(tape.records):
        g = grads.pop(id(rec.output), None)
        if g is None:
            continue
        for inp, gi in zip(rec.inputs, rec.backward(g)):
            if gi is None or not inp.requires_grad:
                continue
            if inp._is_leaf:
                inp.grad = gi.copy() if inp.grad is None else inp.grad + gi
            else:
                key = id(inp)
                grads[key] = grads[key] + gi if key in grads else gi
    tape.consumed = True
    stack = _tape_stack()
    if stack[0] is tape:
        stack[0] = Tape()


# ---------------------------------------------------------------- optimizer


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: np.ndarray) -> "AdamState":
        return cls(np.zeros_like(params), np.zeros_like(params))

    def copy(self) -> "AdamState":
        return AdamState(self.m.copy(), self.v.copy(), self.t, self.beta1, self.beta2, self.eps)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState, lr: float, l2: float = 0.0) -> np.ndarray:
    """One Adam update of ``params`` in place; L2 is folded into the gradient."""
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    g = grads + l2 * params if l2 else grads
    state.t += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * g
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * (g * g)
    m_hat = state.m / (1.0 - state.beta1**state.t)
    v_hat = state.v / (1.0 - state.beta2**state.t)
    params -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params
