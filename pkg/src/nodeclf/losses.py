"""Margin-based classification losses built by damping the logistic loss.

Each loss is a non-decreasing transform of the plain logistic loss
z = log(1 + exp(-v)), where v is the margin y * f(x).  Weakening convexity
this way trades a little convergence speed for robustness to outliers.
The ``loge`` member, log(eps + z) - log(eps), is calibrated so that with
eps = 1 - log(2) the gradient magnitude peaks exactly at the decision
boundary v = 0 (the second derivative vanishes there).

Every function here is a pure elementwise map accepting scalars or arrays,
is overflow-safe for |v| up to 1e3, and ships its exact analytic derivative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import InputError

LOSS_KINDS = ("logistic", "exponential", "sigmoid", "savage", "lq", "loge")

DEFAULT_EPSILON = 1.0 - np.log(2.0)
DEFAULT_Q = 0.5

# exponential loss saturates below this margin to avoid overflow
_EXP_CLAMP = -30.0


@dataclass(frozen=True)
class LossSpec:
    """Selects a loss family member plus its shape parameters."""

    kind: str = "logistic"
    q: float = DEFAULT_Q
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise InputError(
                f"unknown loss kind {self.kind!r}; choose from {LOSS_KINDS}"
            )
        if self.q <= 0:
            raise InputError("q must be positive")
        if self.epsilon <= 0:
            raise InputError("epsilon must be positive")


def softplus(u):
    """log(1 + exp(u)) via logaddexp: exact branch handling for large |u|."""
    return np.logaddexp(0.0, u)


def loss_transform(spec: LossSpec, z):
    """The damping map applied to a non-negative raw loss value z.

    logistic: z                 exponential: exp(z) - 1
    sigmoid:  1 - exp(-z)       savage:      (1 - exp(-z))^2
    lq:       (1 - exp(-q z))/q loge:        log(eps + z) - log(eps)

    All members satisfy transform(0) = 0 and are non-decreasing.
    """
    z = np.asarray(z, dtype=np.float64)
    if np.any(z < 0):
        raise InputError("loss_transform requires z >= 0")
    k = spec.kind
    if k == "logistic":
        return z + 0.0
    if k == "exponential":
        return np.expm1(z)
    if k == "sigmoid":
        return -np.expm1(-z)
    if k == "savage":
        return np.square(-np.expm1(-z))
    if k == "lq":
        return -np.expm1(-spec.q * z) / spec.q
    if k == "loge":
        return np.log1p(z / spec.epsilon)
    raise InputError(f"unknown loss kind {k!r}")


def loss_transform_grad(spec: LossSpec, z):
    """d transform / dz, used to chain through the multi-class raw loss."""
    z = np.asarray(z, dtype=np.float64)
    if np.any(z < 0):
        raise InputError("loss_transform_grad requires z >= 0")
    k = spec.kind
    if k == "logistic":
        return np.ones_like(z)
    if k == "exponential":
        return np.exp(z)
    if k == "sigmoid":
        return np.exp(-z)
    if k == "savage":
        return 2.0 * -np.expm1(-z) * np.exp(-z)
    if k == "lq":
        return np.exp(-spec.q * z)
    if k == "loge":
        return 1.0 / (spec.epsilon + z)
    raise InputError(f"unknown loss kind {k!r}")


def margin_loss(spec: LossSpec, v):
    """Loss at margin v, via the numerically stable closed forms.

    Equal to loss_transform(spec, softplus(-v)) but safe across the whole
    float range; the exponential member is capped at exp(30) below v = -30.
    """
    v = np.asarray(v, dtype=np.float64)
    k = spec.kind
    if k == "logistic":
        return softplus(-v)
    if k == "exponential":
        return np.exp(-np.maximum(v, _EXP_CLAMP))
    if k == "sigmoid":
        return expit(-v)
    if k == "savage":
        return np.square(expit(-v))
    if k == "lq":
        # sigma(v)^q == exp(-q * softplus(-v))
        return -np.expm1(-spec.q * softplus(-v)) / spec.q
    if k == "loge":
        return np.log1p(softplus(-v) / spec.epsilon)
    raise InputError(f"unknown loss kind {k!r}")


def margin_loss_grad(spec: LossSpec, v):
    """Exact derivative of margin_loss with respect to v (negative everywhere)."""
    v = np.asarray(v, dtype=np.float64)
    k = spec.kind
    if k == "logistic":
        return -expit(-v)
    if k == "exponential":
        return -np.exp(-np.maximum(v, _EXP_CLAMP))
    if k == "sigmoid":
        return -expit(v) * expit(-v)
    if k == "savage":
        return -2.0 * expit(v) * np.square(expit(-v))
    if k == "lq":
        return -np.exp(-spec.q * softplus(-v)) * expit(-v)
    if k == "loge":
        return -expit(-v) / (spec.epsilon + softplus(-v))
    raise InputError(f"unknown loss kind {k!r}")


def _validate_mask(mask: np.ndarray, n: int) -> np.ndarray:
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise InputError("loss mask is empty")
    if mask.min() < 0 or mask.max() >= n:
        raise InputError("loss mask index out of range")
    return mask


def _raw_ce(logits: np.ndarray, y_onehot: np.ndarray, mask: np.ndarray):
    """Per-node cross entropy on masked rows plus its softmax probabilities."""
    shifted = logits[mask] - logits[mask].max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    ce = -(y_onehot[mask] * log_probs).sum(axis=1)
    probs = np.exp(log_probs)
    return ce, probs


def composed_ce_loss(
    logits: np.ndarray, y_onehot: np.ndarray, mask, spec: LossSpec
):
    """Mean transform(raw cross entropy) over masked nodes, with gradient.

    The logistic member reduces to plain cross entropy; loge gives
    log(eps + ce) - log(eps) per node, matching the multi-class calibrated
    loss.  Gradient rows are (softmax - onehot) scaled per node by the
    transform derivative, divided by the mask size; other rows are zero.
    """
    mask = _validate_mask(mask, logits.shape[0])
    ce, probs = _raw_ce(logits, y_onehot, mask)
    loss = float(np.mean(loss_transform(spec, ce)))
    scale = loss_transform_grad(spec, ce)[:, None] / mask.size
    d_logits = np.zeros_like(logits)
    d_logits[mask] = (probs - y_onehot[mask]) * scale
    return loss, d_logits


def ce_loss(logits: np.ndarray, y_onehot: np.ndarray, mask):
    """Mean cross entropy over masked nodes, with gradient."""
    return composed_ce_loss(logits, y_onehot, mask, LossSpec("logistic"))


def loge_multiclass(
    logits: np.ndarray, y_onehot: np.ndarray, mask, epsilon: float = DEFAULT_EPSILON
):
    """Calibrated multi-class loss log(eps + ce) - log(eps), with gradient."""
    return composed_ce_loss(
        logits, y_onehot, mask, LossSpec("loge", epsilon=epsilon)
    )


def binary_margin_batch(
    scores: np.ndarray, labels: np.ndarray, mask, spec: LossSpec
):
    """Mean margin loss over all entries of masked rows, with gradient.

    ``labels`` must be +-1 with the same shape as ``scores``; masked rows
    contribute every column (the multi-label binary setting).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if labels.shape != scores.shape:
        raise InputError("labels must match scores shape")
    if not np.all(np.isin(labels, (-1.0, 1.0))):
        raise InputError("binary labels must be -1 or +1")
    mask = _validate_mask(mask, scores.shape[0])
    margins = labels[mask] * scores[mask]
    count = margins.size
    loss = float(np.sum(margin_loss(spec, margins)) / count)
    d_scores = np.zeros_like(scores)
    d_scores[mask] = labels[mask] * margin_loss_grad(spec, margins) / count
    return loss, d_scores
