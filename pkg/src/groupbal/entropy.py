"""Softmax-over-losses entropy machinery.

The balancing signal treats the K group losses as logits of a categorical
distribution p = softmax(l).  The coefficients

    w'_i = p_i log(p_i) - p_i * sum_j p_j log(p_j)

combine the group gradients into a direction d = sum_i w'_i g_i whose
descent step theta <- theta - eta * d *ascends* the entropy of p (the
analytic gradient of H(softmax(l(theta))) is exactly -d), pulling the
loss magnitudes toward each other.  The coefficients always sum to zero,
vanish exactly when all losses are equal, and are positive on the
largest-loss group and negative on the smallest.

`alt_coefficients` is a cheaper variant for strictly positive losses that
normalizes the losses directly (q_i = l_i / sum l_j) instead of taking a
softmax.  It obeys the same sign contract and is selectable in the
balancer config, but is not the default.
"""

from __future__ import annotations

import numpy as np

from .group_state import gradient_set, loss_vector

__all__ = [
    "softmax_losses",
    "entropy_value",
    "entropy_coefficients",
    "entropy_direction",
    "alt_coefficients",
]

# Floor applied to probabilities before log: protects against
# underflow-to-zero p, which only occurs for distributions already at
# entropy ~ 0.
_LOG_FLOOR = 1e-300


def _safe_log(p: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(p, _LOG_FLOOR))


def softmax_losses(losses) -> np.ndarray:
    """Softmax of the loss vector, shifted by the max before exponentiating.

    The shift is mathematically exact and mandatory: group losses can
    transiently exceed 700, where a naive exp overflows.
    """
    l = loss_vector(losses)
    z = np.exp(l - np.max(l))
    return z / z.sum()


def entropy_value(losses) -> float:
    """Entropy H = -sum p_i log p_i of softmax_losses; in [0, log K]."""
    p = softmax_losses(losses)
    return float(-np.dot(p, _safe_log(p)))


def entropy_coefficients(p) -> np.ndarray:
    """Per-group combination coefficients w'_i = p_i log p_i - p_i sum_j p_j log p_j.

    A uniform distribution has identically zero coefficients; that case is
    returned exactly (equal losses give bitwise-equal softmax entries, and
    summation roundoff must not leave a spurious 1e-17 direction).
    """
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size < 2:
        raise ValueError(f"distribution must be 1-D with K >= 2, got shape {p.shape}")
    if p.min() == p.max():
        return np.zeros(p.size)
    plogp = p * _safe_log(p)
    return plogp - p * plogp.sum()


def entropy_direction(g, losses) -> np.ndarray:
    """Direction d = sum_i w'_i g_i; the step theta - eta*d ascends the entropy."""
    g = gradient_set(g)
    l = loss_vector(losses)
    if g.shape[0] != l.shape[0]:
        raise ValueError(f"dimension mismatch: gradients {g.shape[0]} groups, losses {l.shape[0]}")
    return entropy_coefficients(softmax_losses(l)) @ g


def alt_coefficients(losses) -> np.ndarray:
    """Balancing coefficients from the normalized-loss distribution q = l / sum(l).

    Coefficient of g_i is (log(q_i) * sum_j l_j - sum_j log(q_j) * l_j),
    divided by sum_j l_j so magnitudes stay comparable to
    entropy_coefficients.  Requires strictly positive losses.  The
    loss-weighted sum sum_i l_i * coeff_i telescopes to zero; unlike the
    softmax coefficients the plain sum does not.
    """
    l = loss_vector(losses)
    if np.min(l) <= 0.0:
        raise ValueError("alt coefficients require strictly positive losses")
    if l.min() == l.max():
        return np.zeros(l.size)
    total = l.sum()
    q = l / total
    logq = _safe_log(q)
    raw = logq * total - np.dot(logq, l)
    return raw / total
