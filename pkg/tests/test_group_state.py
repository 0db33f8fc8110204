import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from groupbal.group_state import (
    apply_control,
    combine,
    controlling_vector,
    gradient_set,
    gram,
    loss_vector,
    simplex_weights,
)


def finite_floats(lo=-10.0, hi=10.0):
    return st.floats(min_value=lo, max_value=hi, allow_nan=False, allow_infinity=False)


@st.composite
def gradient_sets(draw, max_k=5, max_d=6):
    k = draw(st.integers(2, max_k))
    d = draw(st.integers(1, max_d))
    vals = draw(st.lists(finite_floats(), min_size=k * d, max_size=k * d))
    return np.array(vals).reshape(k, d)


@st.composite
def weights_for(draw, k):
    raw = draw(st.lists(st.floats(0.0, 1.0, allow_nan=False), min_size=k, max_size=k))
    raw = np.array(raw) + 1e-3
    return raw / raw.sum()


def test_gram_orthonormal_rows():
    g = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert np.array_equal(gram(g), np.eye(2))


def test_gram_antipodal_rows():
    g = np.array([[1.0, 0.0], [-1.0, 0.0]])
    assert np.array_equal(gram(g), np.array([[1.0, -1.0], [-1.0, 1.0]]))


def test_gram_matches_double_loop_oracle():
    rng = np.random.default_rng(42)
    g = rng.standard_normal((3, 5))
    m = gram(g)
    for i in range(3):
        for j in range(3):
            # independent high-precision re-computation of the dot product
            expected = math.fsum(float(g[i, t]) * float(g[j, t]) for t in range(5))
            assert m[i, j] == pytest.approx(expected, abs=1e-12)


@given(gradient_sets())
def test_gram_exactly_symmetric(g):
    m = gram(g)
    assert np.array_equal(m, m.T)


@given(gradient_sets())
def test_gram_diagonal_nonnegative(g):
    assert np.all(np.diag(gram(g)) >= 0.0)


def test_combine_one_hot_returns_row():
    g = np.array([[3.0, -1.0, 2.0], [0.5, 0.5, 0.5]])
    d = combine(g, np.array([1.0, 0.0]))
    assert np.array_equal(d, g[0])


def test_combine_uniform_example():
    g = np.array([[2.0, 0.0], [0.0, 2.0]])
    assert np.array_equal(combine(g, np.array([0.5, 0.5])), np.array([1.0, 1.0]))


def test_combine_matches_elementwise_oracle():
    rng = np.random.default_rng(3)
    g = rng.standard_normal((4, 6))
    w = simplex_weights(rng.uniform(0.1, 1.0, 4))
    d = combine(g, w)
    for t in range(6):
        expected = math.fsum(float(w[i]) * float(g[i, t]) for i in range(4))
        assert d[t] == pytest.approx(expected, abs=1e-12)


@settings(max_examples=50)
@given(gradient_sets(), st.floats(0.0, 1.0, allow_nan=False), st.data())
def test_combine_linearity(g, alpha, data):
    k = g.shape[0]
    w1 = data.draw(weights_for(k))
    w2 = data.draw(weights_for(k))
    mixed = combine(g, alpha * w1 + (1.0 - alpha) * w2)
    parts = alpha * combine(g, w1) + (1.0 - alpha) * combine(g, w2)
    assert np.allclose(mixed, parts, atol=1e-10)


@settings(max_examples=50)
@given(gradient_sets(), st.data())
def test_combine_gram_consistency(g, data):
    # <combine(g, w), g_k> == (gram(g) @ w)_k: the identity the LP relies on
    w = data.draw(weights_for(g.shape[0]))
    lhs = g @ combine(g, w)
    rhs = gram(g) @ w
    assert np.allclose(lhs, rhs, atol=1e-9 * max(1.0, np.abs(rhs).max()))


def test_apply_control_identity_is_bitwise():
    rng = np.random.default_rng(5)
    losses = rng.uniform(0.0, 3.0, 4)
    g = rng.standard_normal((4, 7))
    l2, g2 = apply_control(losses, g, np.ones(4))
    assert np.array_equal(l2, losses)
    assert np.array_equal(g2, g)


def test_apply_control_scales_both():
    losses = np.array([3.0, 3.0])
    g = np.array([[1.0, 2.0], [3.0, 4.0]])
    l2, g2 = apply_control(losses, g, np.array([1.0, 2.0]))
    assert np.array_equal(l2, np.array([3.0, 6.0]))
    assert np.array_equal(g2[0], g[0])
    assert np.array_equal(g2[1], 2.0 * g[1])


def test_apply_control_random_elementwise_oracle():
    rng = np.random.default_rng(11)
    losses = rng.uniform(0.1, 5.0, 3)
    g = rng.standard_normal((3, 4))
    c = rng.uniform(0.5, 2.0, 3)
    l2, g2 = apply_control(losses, g, c)
    for k in range(3):
        assert l2[k] == losses[k] * c[k]
        assert np.array_equal(g2[k], g[k] * c[k])


def test_apply_control_rejects_nonpositive():
    with pytest.raises(ValueError):
        apply_control(np.array([1.0, 1.0]), np.eye(2), np.array([1.0, 0.0]))


def test_loss_vector_validation():
    with pytest.raises(ValueError):
        loss_vector([1.0])
    with pytest.raises(ValueError):
        loss_vector([1.0, np.nan])
    with pytest.raises(ValueError):
        loss_vector([[1.0, 2.0]])


def test_gradient_set_validation():
    with pytest.raises(ValueError):
        gradient_set([[1.0], ])
    with pytest.raises(ValueError):
        gradient_set([[1.0, np.inf], [0.0, 1.0]])


def test_combine_dimension_mismatch():
    with pytest.raises(ValueError):
        combine(np.eye(3), np.array([0.5, 0.5]))


def test_simplex_weights_renormalizes_and_clamps():
    w = simplex_weights(np.array([0.5, 0.5, -1e-13]))
    assert w[2] == 0.0
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        simplex_weights(np.array([0.5, 0.5, -1e-11]))
    with pytest.raises(ValueError):
        simplex_weights(np.array([0.0, 0.0]))


def test_controlling_vector_validation():
    assert np.array_equal(controlling_vector([1.0, 2.0]), np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        controlling_vector([1.0, -2.0])
    with pytest.raises(ValueError):
        controlling_vector([1.0, np.inf])
