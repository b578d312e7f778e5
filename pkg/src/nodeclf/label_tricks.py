"""Label-as-input training and label reuse.

Per epoch the train set is split into a carrier half, whose ground-truth
labels are fed to the model as extra input columns, and a withheld half that
keeps zero label inputs and is predicted like test nodes.  Label reuse then
recycles the model's own soft predictions into the label-input rows of every
non-carrier node for a configurable number of extra forward passes.

Ground-truth labels of withheld/validation/test nodes must never appear in a
label-input matrix; ``build_label_input`` enforces the carrier-set guard and
``LeakageMonitor`` lets tests audit every matrix a trainer builds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError, LeakageError


@dataclass(frozen=True)
class LabelTrickConfig:
    """Parameters for label-as-input training and label reuse."""

    enabled: bool = False
    split_ratio: float = 0.5
    recycle: int = 0
    reuse_soft: bool = True
    labels_on_du_only: bool = False

    def __post_init__(self):
        if not 0.0 < self.split_ratio < 1.0:
            raise ConfigError("split_ratio must be in (0, 1)")
        if self.recycle < 0:
            raise ConfigError("recycle count must be >= 0")


def split_train(
    train_idx: np.ndarray, split_ratio: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Fresh random split of the train indices into carrier and withheld sets.

    The carrier set gets round(split_ratio * M) nodes.  The generator
    advances, so consecutive epochs see different splits while a fixed seed
    reproduces the whole sequence.
    """
    train_idx = np.asarray(train_idx, dtype=np.int64)
    m = train_idx.size
    if m < 2:
        raise InputError("need at least two train nodes to split")
    size = round(split_ratio * m)
    if size == 0 or size == m:
        raise ConfigError(
            f"split_ratio={split_ratio} leaves an empty sub-set for M={m}"
        )
    perm = rng.permutation(m)
    dl = np.sort(train_idx[perm[:size]])
    du = np.sort(train_idx[perm[size:]])
    return dl, du


def build_label_input(labels, dl: np.ndarray) -> np.ndarray:
    """One-hot labels on the carrier rows, zeros everywhere else.

    Rejects any carrier index outside the train set: that is exactly how
    validation or test labels would leak into the input.
    """
    dl = np.asarray(dl, dtype=np.int64)
    if dl.size and not np.isin(dl, labels.train_idx).all():
        raise LeakageError("label-input rows must come from the train set")
    out = np.zeros_like(labels.y)
    if dl.size:
        out[dl] = labels.y[dl]
    return out


def augment_features(x: np.ndarray, label_input: np.ndarray) -> np.ndarray:
    """Concatenate label-input columns after the feature columns."""
    if x.shape[0] != label_input.shape[0]:
        raise InputError("feature and label-input row counts differ")
    return np.hstack([x, label_input])


def label_reuse_step(
    labels, dl: np.ndarray, y_hat_prev: np.ndarray, reuse_soft: bool = True
) -> np.ndarray:
    """Label input for the next pass: truth on carrier rows, predictions elsewhere.

    ``y_hat_prev`` rows must be probability vectors (post-softmax) when
    recycling soft labels; with ``reuse_soft=False`` the argmax one-hot is
    used instead.  Withheld, validation, and test rows are all treated alike.
    """
    dl = np.asarray(dl, dtype=np.int64)
    if dl.size and not np.isin(dl, labels.train_idx).all():
        raise LeakageError("label-input rows must come from the train set")
    if y_hat_prev.shape != labels.y.shape:
        raise InputError("prediction matrix shape must match the label matrix")
    if reuse_soft:
        sums = y_hat_prev.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-6):
            raise InputError("soft predictions must be row-normalized")
        recycled = y_hat_prev
    else:
        recycled = np.zeros_like(y_hat_prev)
        recycled[np.arange(y_hat_prev.shape[0]), y_hat_prev.argmax(axis=1)] = 1.0
    out = recycled.copy()
    if dl.size:
        out[dl] = labels.y[dl]
    return out


def inference_label_input(labels) -> np.ndarray:
    """Inference-time label input: every train label present, zeros elsewhere."""
    out = np.zeros_like(labels.y)
    if labels.train_idx.size:
        out[labels.train_idx] = labels.y[labels.train_idx]
    return out


class LeakageMonitor:
    """Audits label-input matrices handed to a model during training.

    At pass 0 every non-carrier row must be exactly zero; at later passes
    non-carrier rows must equal the recycled model output, bit for bit.
    Violations are collected rather than raised so a test can inspect them.
    """

    def __init__(self, labels):
        self.labels = labels
        self.records = 0
        self.violations: list[str] = []

    def _non_carrier(self, dl: np.ndarray) -> np.ndarray:
        mask = np.ones(self.labels.y.shape[0], dtype=bool)
        mask[np.asarray(dl, dtype=np.int64)] = False
        return mask

    def on_label_input(self, epoch: int, pass_idx: int, label_input: np.ndarray,
                       dl: np.ndarray, recycled_from: np.ndarray | None) -> None:
        self.records += 1
        other = self._non_carrier(dl)
        if pass_idx == 0:
            if np.any(label_input[other] != 0.0):
                self.violations.append(
                    f"epoch {epoch}: nonzero label input outside carrier set at pass 0"
                )
        else:
            if recycled_from is None:
                self.violations.append(
                    f"epoch {epoch} pass {pass_idx}: missing recycled source"
                )
            elif not np.array_equal(label_input[other], recycled_from[other]):
                self.violations.append(
                    f"epoch {epoch} pass {pass_idx}: non-carrier rows are not "
                    "the recycled model output"
                )
        carrier = np.asarray(dl, dtype=np.int64)
        if carrier.size and not np.array_equal(
            label_input[carrier], self.labels.y[carrier]
        ):
            self.violations.append(
                f"epoch {epoch} pass {pass_idx}: carrier rows do not match their labels"
            )
