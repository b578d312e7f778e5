"""Dense kernels with explicit forward/backward pairs.

No autodiff tape: each operation exposes its own backward, and every
backward in the package is validated against the central finite-difference
checker at the bottom of this module.  All tensors are float64, row-major.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

_debug_checks = False


def set_debug(enabled: bool) -> None:
    """Toggle NaN/Inf assertions on kernel outputs (off by default)."""
    global _debug_checks
    _debug_checks = bool(enabled)


def _check(name: str, arr: np.ndarray) -> np.ndarray:
    if _debug_checks and not np.all(np.isfinite(arr)):
        raise InputError(f"non-finite values in {name}")
    return arr


class Param:
    """A named trainable matrix with a same-shape gradient slot."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        value = np.ascontiguousarray(value, dtype=np.float64)
        if value.ndim != 2:
            raise InputError(f"parameter {name!r} must be 2-D, got {value.shape}")
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)


class ParamStore:
    """Ordered collection of uniquely named parameters."""

    def __init__(self):
        self._entries: dict[str, Param] = {}

    def add(self, name: str, value: np.ndarray) -> Param:
        if name in self._entries:
            raise InputError(f"duplicate parameter name {name!r}")
        p = Param(name, value)
        self._entries[name] = p
        return p

    def __getitem__(self, name: str) -> Param:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list[str]:
        return list(self._entries)

    def params(self) -> list[Param]:
        return list(self._entries.values())

    def zero_grads(self) -> None:
        for p in self._entries.values():
            p.grad.fill(0.0)

    def num_values(self) -> int:
        return sum(p.value.size for p in self._entries.values())

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: p.value.copy() for k, p in self._entries.items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for k, v in snap.items():
            np.copyto(self._entries[k].value, v)


def glorot_init(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform init in +-sqrt(6/(rows+cols)); deterministic for a fixed seed."""
    if rows < 1 or cols < 1:
        raise InputError("glorot_init needs positive dimensions")
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


def affine(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """x @ w, plus a broadcast row bias when given."""
    if x.shape[1] != w.shape[0]:
        raise InputError(f"affine shape mismatch: {x.shape} @ {w.shape}")
    out = x @ w
    if b is not None:
        out = out + b
    return _check("affine", out)


def affine_backward(
    d_out: np.ndarray, x: np.ndarray, w: np.ndarray, with_bias: bool = False
):
    """Gradients (d_x, d_w, d_b) for the affine forward."""
    d_x = d_out @ w.T
    d_w = x.T @ d_out
    d_b = d_out.sum(axis=0, keepdims=True) if with_bias else None
    return d_x, d_w, d_b


ACTIVATIONS = ("relu", "leaky_relu", "elu", "identity")


def activation(x: np.ndarray, kind: str, slope: float = 0.2) -> np.ndarray:
    """Elementwise nonlinearity; see activation_grad for the kink convention."""
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "leaky_relu":
        if slope < 0:
            raise InputError("leaky_relu slope must be >= 0")
        return np.where(x > 0, x, slope * x)
    if kind == "elu":
        return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))
    if kind == "identity":
        return x
    raise InputError(f"unknown activation {kind!r}")


def activation_grad(x: np.ndarray, kind: str, slope: float = 0.2) -> np.ndarray:
    """Derivative evaluated at pre-activation x.

    At the ReLU/LeakyReLU kink the left value is used (0 and slope),
    so x == 0 maps to 0 resp. slope.
    """
    if kind == "relu":
        return (x > 0).astype(np.float64)
    if kind == "leaky_relu":
        return np.where(x > 0, 1.0, slope)
    if kind == "elu":
        return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))
    if kind == "identity":
        return np.ones_like(x)
    raise InputError(f"unknown activation {kind!r}")


def softmax_rows(x: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction; rows sum to 1."""
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows_backward(probs: np.ndarray, d_probs: np.ndarray) -> np.ndarray:
    """Jacobian-vector product of the row softmax."""
    inner = (d_probs * probs).sum(axis=1, keepdims=True)
    return probs * (d_probs - inner)


def dropout_mask(
    shape: tuple[int, ...], rate: float, rng: np.random.Generator
) -> np.ndarray:
    """Inverted-dropout multiplier: zeros with prob rate, else 1/(1-rate).

    The uniform draw uses float32 (cheaper, same Bernoulli law); the mask
    itself stays float64.
    """
    if not 0.0 <= rate < 1.0:
        raise InputError("dropout rate must be in [0, 1)")
    if rate == 0.0:
        return np.ones(shape)
    keep = rng.random(shape, dtype=np.float32) >= rate
    return keep / (1.0 - rate)


@dataclass
class AdamState:
    """Adam moments plus hyperparameters; weight decay is decoupled."""

    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    t: int = 0
    moments: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)


def adam_step(params: ParamStore, state: AdamState) -> None:
    """One Adam update with bias correction, in place.

    Decoupled weight decay shrinks the value by (1 - lr * weight_decay)
    before the Adam delta is applied.
    """
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for p in params.params():
        if p.name not in state.moments:
            state.moments[p.name] = (np.zeros_like(p.value), np.zeros_like(p.value))
        m, v = state.moments[p.name]
        m *= b1
        m += (1.0 - b1) * p.grad
        v *= b2
        v += (1.0 - b2) * np.square(p.grad)
        if state.weight_decay:
            p.value *= 1.0 - state.lr * state.weight_decay
        m_hat = m / bc1
        v_hat = v / bc2
        p.value -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        _check(p.name, p.value)


def grad_check(
    loss_fn,
    params: ParamStore,
    h: float = 1e-5,
    sample_count: int = 64,
    rng: np.random.Generator | None = None,
    return_details: bool = False,
):
    """Compare analytic gradients against central finite differences.

    ``loss_fn()`` must return a scalar loss and leave the corresponding
    gradients in ``params`` (zeroing first is its job).  A random sample of
    coordinates is perturbed by +-h; the worst relative error
    |fd - grad| / max(|fd|, |grad|, 1e-4) is returned.  The 1e-4 floor keeps
    finite-difference round-off from dominating near-zero gradients.
    """
    rng = rng or np.random.default_rng(0)
    loss0 = loss_fn()
    if not np.isfinite(loss0):
        raise InputError("grad_check: loss is not finite")
    analytic = {p.name: p.grad.copy() for p in params.params()}

    coords: list[tuple[str, int]] = []
    for p in params.params():
        coords.extend((p.name, i) for i in range(p.value.size))
    if len(coords) > sample_count:
        picks = rng.choice(len(coords), size=sample_count, replace=False)
        coords = [coords[i] for i in sorted(picks)]

    worst = 0.0
    details = []
    for name, i in coords:
        value = params[name].value
        orig = value.flat[i]
        value.flat[i] = orig + h
        lp = loss_fn()
        value.flat[i] = orig - h
        lm = loss_fn()
        value.flat[i] = orig
        if not (np.isfinite(lp) and np.isfinite(lm)):
            raise InputError("grad_check: perturbed loss is not finite")
        fd = (lp - lm) / (2.0 * h)
        a = analytic[name].flat[i]
        err = abs(fd - a) / max(abs(fd), abs(a), 1e-4)
        details.append((name, i, a, fd, err))
        worst = max(worst, err)

    # restore the recorded gradients so callers see the unperturbed state
    loss_fn()
    if return_details:
        return worst, details
    return worst
