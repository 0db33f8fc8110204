"""Core numeric state shared by the solvers.

Everything is a plain float64 numpy array: loss vectors of shape (K,),
gradient sets of shape (K, D) with one row per group, K x K Gram matrices
of pairwise gradient inner products, and combination weights on the
simplex.  The small constructor helpers validate invariants once at the
boundary; the math helpers then assume validated inputs but still check
shape agreement where silent broadcasting would hide bugs.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "loss_vector",
    "gradient_set",
    "simplex_weights",
    "controlling_vector",
    "gram",
    "combine",
    "apply_control",
]

# LP and Frank-Wolfe solutions carry tiny negative residue; anything below
# this is a real sign error, not roundoff.
NEGATIVE_WEIGHT_TOL = 1e-12


def loss_vector(values) -> np.ndarray:
    """Validate and return a (K,) float64 vector of per-group losses."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size < 2:
        raise ValueError(f"loss vector must be 1-D with K >= 2, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("loss vector contains non-finite entries")
    return v


def gradient_set(vectors) -> np.ndarray:
    """Validate and return a (K, D) float64 matrix of per-group gradients."""
    g = np.asarray(vectors, dtype=np.float64)
    if g.ndim != 2 or g.shape[0] < 2 or g.shape[1] < 1:
        raise ValueError(f"gradient set must be (K>=2, D>=1), got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise ValueError("gradient set contains non-finite entries")
    return g


def simplex_weights(w) -> np.ndarray:
    """Validate, clamp and renormalize combination weights onto the simplex.

    Entries as low as -1e-12 are tolerated (solver residue), clamped to
    zero, and the vector is divided by its sum.  Anything more negative
    is rejected.
    """
    v = np.asarray(w, dtype=np.float64)
    if v.ndim != 1 or v.size < 2:
        raise ValueError(f"weights must be 1-D with K >= 2, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("weights contain non-finite entries")
    if np.min(v) < -NEGATIVE_WEIGHT_TOL:
        raise ValueError(f"weight {np.min(v)} below -{NEGATIVE_WEIGHT_TOL}")
    v = np.maximum(v, 0.0)
    total = v.sum()
    if total <= 0.0:
        raise ValueError("weights sum to zero; cannot normalize")
    return v / total


def controlling_vector(c) -> np.ndarray:
    """Validate a (K,) vector of strictly positive per-group scale factors."""
    v = np.asarray(c, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise ValueError(f"controlling vector must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)) or np.min(v) <= 0.0:
        raise ValueError("controlling vector entries must be strictly positive and finite")
    return v


def gram(g: np.ndarray) -> np.ndarray:
    """K x K matrix of pairwise gradient inner products.

    Each entry is a single np.dot over the parameter dimension; the upper
    triangle is computed and mirrored, so the result is exactly symmetric
    and independent of any parallel schedule.
    """
    g = gradient_set(g)
    k = g.shape[0]
    m = np.empty((k, k), dtype=np.float64)
    for i in range(k):
        for j in range(i, k):
            v = float(np.dot(g[i], g[j]))
            m[i, j] = v
            m[j, i] = v
    return m


def combine(g: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Weighted combination sum_k w_k * g_k of the group gradients."""
    g = np.asarray(g, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if g.ndim != 2 or w.ndim != 1 or g.shape[0] != w.shape[0]:
        raise ValueError(f"dimension mismatch: gradients {g.shape}, weights {w.shape}")
    return w @ g


def apply_control(losses: np.ndarray, g: np.ndarray, c: np.ndarray):
    """Scale group k's loss and gradient by c_k.

    Since grad(c_k * l_k) = c_k * grad(l_k), scaling both keeps them
    consistent.  With c = ones this is the exact identity.
    """
    losses = loss_vector(losses)
    g = gradient_set(g)
    c = controlling_vector(c)
    if not (losses.shape[0] == g.shape[0] == c.shape[0]):
        raise ValueError(
            f"length mismatch: losses {losses.shape[0]}, gradients {g.shape[0]}, control {c.shape[0]}"
        )
    return losses * c, g * c[:, None]
