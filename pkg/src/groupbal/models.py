"""Small differentiable classifiers with exact manual gradients.

Two model kinds act as desk-scale stand-ins for large backbones: a
linear softmax classifier and a one-hidden-layer MLP (relu or tanh).
Parameters live in a single flat float64 vector; gradients come from
hand-written backprop so the gradient contract is testable against
finite differences without any autodiff dependency.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ModelSpec",
    "Batch",
    "param_count",
    "init",
    "loss_and_grad",
    "per_sample_losses",
    "group_losses",
    "group_losses_and_grads",
    "predict",
]

LINEAR_SOFTMAX = "linear_softmax"
MLP1 = "mlp1"
_ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    feature_dim: int
    classes: int
    hidden: int | None = None
    activation: str | None = None

    def __post_init__(self):
        if self.kind not in (LINEAR_SOFTMAX, MLP1):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.feature_dim < 1 or self.classes < 1:
            raise ValueError("feature_dim and classes must be >= 1")
        if self.kind == MLP1:
            if self.hidden is None or self.hidden < 1:
                raise ValueError("mlp1 requires hidden >= 1")
            act = self.activation if self.activation is not None else "relu"
            if act not in _ACTIVATIONS:
                raise ValueError(f"activation must be one of {_ACTIVATIONS}")
            object.__setattr__(self, "activation", act)
        else:
            if self.hidden is not None or self.activation is not None:
                raise ValueError("linear_softmax takes no hidden/activation")


@dataclass(frozen=True)
class Batch:
    inputs: np.ndarray  # (N, F)
    labels: np.ndarray  # (N,) class indices
    group_ids: np.ndarray  # (N,) in [0, num_groups)
    num_groups: int

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        gid = np.asarray(self.group_ids, dtype=np.int64)
        if x.ndim != 2:
            raise ValueError(f"inputs must be 2-D, got shape {x.shape}")
        n = x.shape[0]
        if y.shape != (n,) or gid.shape != (n,):
            raise ValueError("inputs, labels and group_ids must share the sample count")
        if not np.all(np.isfinite(x)):
            raise ValueError("inputs contain non-finite entries")
        if n and (y.min() < 0):
            raise ValueError("labels must be non-negative class indices")
        if self.num_groups < 1:
            raise ValueError("num_groups must be >= 1")
        if n and (gid.min() < 0 or gid.max() >= self.num_groups):
            raise ValueError("group ids out of range")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "group_ids", gid)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    def take(self, rows: np.ndarray) -> "Batch":
        return Batch(self.inputs[rows], self.labels[rows], self.group_ids[rows], self.num_groups)


def param_count(spec: ModelSpec) -> int:
    f, c = spec.feature_dim, spec.classes
    if spec.kind == LINEAR_SOFTMAX:
        return f * c + c
    h = spec.hidden
    return f * h + h + h * c + c


def init(spec: ModelSpec, seed) -> np.ndarray:
    """Uniform(-a, a) weights with a = sqrt(6 / (fan_in + fan_out)); zero biases."""
    rng = np.random.default_rng(seed)
    f, c = spec.feature_dim, spec.classes
    if spec.kind == LINEAR_SOFTMAX:
        a = np.sqrt(6.0 / (f + c))
        w = rng.uniform(-a, a, size=(f, c))
        return np.concatenate([w.ravel(), np.zeros(c)])
    h = spec.hidden
    a1 = np.sqrt(6.0 / (f + h))
    w1 = rng.uniform(-a1, a1, size=(f, h))
    a2 = np.sqrt(6.0 / (h + c))
    w2 = rng.uniform(-a2, a2, size=(h, c))
    return np.concatenate([w1.ravel(), np.zeros(h), w2.ravel(), np.zeros(c)])


def _unpack(spec: ModelSpec, params: np.ndarray):
    f, c = spec.feature_dim, spec.classes
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (param_count(spec),):
        raise ValueError(f"expected {param_count(spec)} parameters, got shape {params.shape}")
    if spec.kind == LINEAR_SOFTMAX:
        w = params[: f * c].reshape(f, c)
        b = params[f * c :]
        return w, b
    h = spec.hidden
    i = 0
    w1 = params[i : i + f * h].reshape(f, h)
    i += f * h
    b1 = params[i : i + h]
    i += h
    w2 = params[i : i + h * c].reshape(h, c)
    i += h * c
    b2 = params[i:]
    return w1, b1, w2, b2


def _forward(spec: ModelSpec, params: np.ndarray, x: np.ndarray):
    """Logits plus the intermediates backprop needs."""
    if spec.kind == LINEAR_SOFTMAX:
        w, b = _unpack(spec, params)
        return x @ w + b, None
    w1, b1, w2, b2 = _unpack(spec, params)
    z1 = x @ w1 + b1
    a1 = np.maximum(z1, 0.0) if spec.activation == "relu" else np.tanh(z1)
    return a1 @ w2 + b2, (z1, a1, w2)


def _log_softmax(logits: np.ndarray):
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return shifted - lse


def per_sample_losses(spec: ModelSpec, params, inputs, labels) -> np.ndarray:
    """Cross-entropy of each sample under max-shifted softmax logits."""
    x = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    logits, _ = _forward(spec, params, x)
    logp = _log_softmax(logits)
    return -logp[np.arange(x.shape[0]), y]


def loss_and_grad(spec: ModelSpec, params, inputs, labels):
    """Mean cross-entropy over the batch and its exact flat gradient."""
    x = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    n = x.shape[0]
    if n < 1:
        raise ValueError("empty batch")
    logits, cache = _forward(spec, params, x)
    logp = _log_softmax(logits)
    loss = float(-logp[np.arange(n), y].mean())

    dz = np.exp(logp)  # softmax probabilities
    dz[np.arange(n), y] -= 1.0
    dz /= n
    if spec.kind == LINEAR_SOFTMAX:
        gw = x.T @ dz
        gb = dz.sum(axis=0)
        return loss, np.concatenate([gw.ravel(), gb])
    z1, a1, w2 = cache
    gw2 = a1.T @ dz
    gb2 = dz.sum(axis=0)
    da1 = dz @ w2.T
    dz1 = da1 * (z1 > 0.0) if spec.activation == "relu" else da1 * (1.0 - a1 * a1)
    gw1 = x.T @ dz1
    gb1 = dz1.sum(axis=0)
    return loss, np.concatenate([gw1.ravel(), gb1, gw2.ravel(), gb2])


def group_losses(spec: ModelSpec, params, batch: Batch) -> np.ndarray:
    """Per-group mean loss in one forward pass."""
    losses = per_sample_losses(spec, params, batch.inputs, batch.labels)
    counts = np.bincount(batch.group_ids, minlength=batch.num_groups)
    if np.any(counts == 0):
        missing = int(np.nonzero(counts == 0)[0][0])
        raise ValueError(f"group {missing} has no samples")
    sums = np.bincount(batch.group_ids, weights=losses, minlength=batch.num_groups)
    return sums / counts


def group_losses_and_grads(spec: ModelSpec, params, batch: Batch):
    """Per-group mean losses, gradients and sample counts.

    The counts feed the erm strategy; the count-weighted mean of the
    gradients equals the pooled gradient, which is exactly why erm
    reproduces plain gradient descent on the pooled loss.
    """
    k = batch.num_groups
    d = param_count(spec)
    losses = np.empty(k)
    grads = np.empty((k, d))
    counts = np.empty(k, dtype=np.int64)
    for gid in range(k):
        rows = np.nonzero(batch.group_ids == gid)[0]
        if rows.size == 0:
            raise ValueError(f"group {gid} has no samples")
        losses[gid], grads[gid] = loss_and_grad(
            spec, params, batch.inputs[rows], batch.labels[rows]
        )
        counts[gid] = rows.size
    return losses, grads, counts


def predict(spec: ModelSpec, params, inputs):
    """Argmax class per row (ties -> lowest index) and the class-1 score."""
    x = np.asarray(inputs, dtype=np.float64)
    logits, _ = _forward(spec, params, x)
    logp = _log_softmax(logits)
    p = np.exp(logp)
    score_col = 1 if spec.classes >= 2 else 0
    return np.argmax(logits, axis=1), p[:, score_col]
