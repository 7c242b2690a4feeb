"""Bilinear attention over time steps, keyed on the last available state.

For a trajectory ``h_1..h_n`` the score of step ``i`` is ``h_n^T W h_i`` (no
scaling), the weights are the softmax of the scores over all ``n`` steps
(the final step included) and the context vector is ``sum_i alpha_i h_i``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .numerics import ShapeError, Tensor
from .recurrent import HiddenTrajectory


@dataclass
class AttentionParams:
    W: Tensor

    def __post_init__(self):
        if self.W.data.ndim != 2 or self.W.shape[0] != self.W.shape[1]:
            raise ShapeError(f"attention W must be square, got {self.W.shape}")

    @classmethod
    def init(cls, hidden_size: int, rng: np.random.Generator, requires_grad: bool = True):
        bound = np.sqrt(6.0 / (2 * hidden_size))
        return cls(Tensor(rng.uniform(-bound, bound, (hidden_size, hidden_size)), requires_grad))


@dataclass
class AttentionOutput:
    scores: Tensor
    weights: Tensor
    context: Tensor


def _states(traj) -> list[Tensor]:
    if isinstance(traj, HiddenTrajectory):
        return traj.hidden
    return list(traj)


def alignment_scores(traj, params: AttentionParams) -> Tensor:
    hs = _states(traj)
    if not hs:
        raise ValueError("alignment_scores: empty trajectory")
    r = hs[-1].shape[0]
    if params.W.shape != (r, r):
        raise ShapeError(f"attention W has shape {params.W.shape}, states have size {r}")
    key = hs[-1] @ params.W
    return nx.stack(hs) @ key


def attention_weights(scores: Tensor) -> Tensor:
    if scores.size == 0:
        raise ValueError("attention_weights: no scores")
    return nx.stable_softmax(scores)


def context_vector(weights: Tensor, traj) -> Tensor:
    hs = _states(traj)
    if weights.shape != (len(hs),):
        raise ShapeError(f"context_vector: {weights.shape[0]} weights for {len(hs)} states")
    return weights @ nx.stack(hs)


def attend(traj, params: AttentionParams) -> AttentionOutput:
    e = alignment_scores(traj, params)
    a = attention_weights(e)
    return AttentionOutput(e, a, context_vector(a, traj))
