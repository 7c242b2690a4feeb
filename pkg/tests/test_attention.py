import math

import numpy as np
import pytest

from earlykd.attention import AttentionParams, alignment_scores, attend, attention_weights, context_vector
from earlykd.numerics import ShapeError, Tensor

from .oracles import attention_scalar


def states(rows):
    return [Tensor(r) for r in np.asarray(rows, dtype=float)]


def W(m):
    return AttentionParams(Tensor(m))


def test_identity_scores_orthogonal_states():
    hs = states([[0.0, 1.0], [1.0, 0.0], [2.0, 0.0]])
    e = alignment_scores(hs, W(np.eye(2))).data
    assert e[0] == 0.0 and e[-1] == 4.0


def test_zero_matrix_gives_zero_scores_and_uniform_weights():
    hs = states(np.random.default_rng(0).normal(size=(5, 3)))
    e = alignment_scores(hs, W(np.zeros((3, 3))))
    assert np.array_equal(e.data, np.zeros(5))
    assert np.allclose(attention_weights(e).data, 0.2, atol=1e-15)


def test_hand_bilinear_score():
    hs = states([[0.0, 1.0], [1.0, 0.0]])
    e = alignment_scores(hs, W(np.array([[0.0, 2.0], [0.0, 0.0]]))).data
    assert e[0] == 2.0


def test_weight_examples():
    a = attention_weights(Tensor([0.0, math.log(3)])).data
    assert np.allclose(a, [0.25, 0.75], atol=1e-15)
    a = attention_weights(Tensor([0.0, 60.0, 1.0])).data
    assert a[1] > 1 - 1e-12 and a[0] < 1e-25
    with pytest.raises(ValueError):
        attention_weights(Tensor(np.zeros(0)))


def test_context_selection_and_constant_states():
    hs = states([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    assert np.array_equal(context_vector(Tensor([0.0, 1.0, 0.0]), hs).data, [3.0, 4.0])
    same = states([[0.25, -0.5]] * 3)
    c = context_vector(Tensor([0.2, 0.3, 0.5]), same).data
    assert np.allclose(c, [0.25, -0.5], atol=1e-16)
    with pytest.raises(ShapeError):
        context_vector(Tensor([0.5, 0.5]), hs)


def test_matches_hand_summation():
    rng = np.random.default_rng(42)
    hs = rng.uniform(-1, 1, (3, 4))
    M = rng.normal(size=(4, 4))
    out = attend(states(hs), W(M))
    e, a, c = attention_scalar(hs.tolist(), M)
    assert np.max(np.abs(out.scores.data - e)) < 1e-13
    assert np.max(np.abs(out.weights.data - a)) < 1e-15
    assert np.max(np.abs(out.context.data - c)) < 1e-15


def test_final_step_is_included():
    hs = states([[0.0, 0.0], [1.0, 0.0]])
    out = attend(hs, W(np.eye(2) * 10))
    assert out.weights.data[-1] > 0.99


def test_dimension_errors():
    with pytest.raises(ShapeError):
        AttentionParams(Tensor(np.zeros((2, 3))))
    with pytest.raises(ShapeError):
        alignment_scores(states(np.zeros((2, 3))), W(np.zeros((2, 2))))
    with pytest.raises(ValueError):
        alignment_scores([], W(np.zeros((2, 2))))


def test_permutation_covariance():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n, r = int(rng.integers(3, 8)), int(rng.integers(2, 6))
        hs = rng.uniform(-1, 1, (n, r))
        M = rng.normal(size=(r, r))
        perm = np.concatenate([rng.permutation(n - 1), [n - 1]])
        a, b = attend(states(hs), W(M)), attend(states(hs[perm]), W(M))
        assert np.allclose(b.scores.data, a.scores.data[perm], atol=1e-13)
        assert np.allclose(b.weights.data, a.weights.data[perm], atol=1e-15)
        assert np.allclose(b.context.data, a.context.data, atol=1e-15)


def attention_invariants(instances=1000, seed=0):
    """Check every attention invariant on random draws; returns the number checked."""
    rng = np.random.default_rng(seed)
    for _ in range(instances):
        n, r = int(rng.integers(1, 8)), int(rng.integers(1, 7))
        hs = rng.uniform(-1, 1, (n, r)) * rng.uniform(0.1, 3)
        M = rng.normal(size=(r, r)) * rng.uniform(0.1, 5)
        out = attend(states(hs), W(M))
        a = out.weights.data
        assert abs(a.sum() - 1.0) <= 1e-9 and np.all(a >= 0)
        # C is exactly the alpha-weighted sum, accumulated in the same order
        assert np.array_equal(out.context.data, a @ hs)
        assert np.max(np.abs(out.context.data)) <= np.max(np.abs(hs)) + 1e-12
        # shift invariance of the weights
        c = float(rng.uniform(-100, 100))
        shifted = attention_weights(Tensor(out.scores.data + c)).data
        assert np.allclose(shifted, a, atol=1e-9)
        # one-hot selection
        j = int(rng.integers(n))
        assert np.array_equal(context_vector(Tensor(np.eye(n)[j]), states(hs)).data, hs[j])
    return instances


def test_attention_invariants_1000_instances():
    assert attention_invariants(1000) == 1000
