"""Training loop, evaluation protocol, and the ablation runner.

One seed = one run: init, epoch loop (optional label-trick split and reuse
passes, loss on the configured mask, Adam step, validation eval), early
stopping on the validation metric, restore of the best-validation
parameters, then a single test evaluation.  Results aggregate to
mean +- sample standard deviation across seeds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .data import DatasetBundle
from .errors import ConfigError, RunError
from .label_tricks import (
    build_label_input,
    augment_features,
    inference_label_input,
    label_reuse_step,
    split_train,
)
from .layers import LayerSpec, Model, build_model
from .losses import binary_margin_batch, composed_ce_loss
from .metrics import accuracy, roc_auc_multilabel
from .nn import AdamState, ParamStore, adam_step, softmax_rows

METRICS_SCHEMA_VERSION = 1


@dataclass
class SeedMetrics:
    """Outcome of a single-seed run."""

    seed: int
    test_metric: float
    valid_metric: float
    best_epoch: int
    epochs_run: int
    train_loss_curve: list[float] = field(default_factory=list)
    valid_curve: list[float] = field(default_factory=list)


@dataclass
class TrainResult:
    per_seed: list[SeedMetrics]
    metric_name: str

    @property
    def mean(self) -> float:
        return float(np.mean([m.test_metric for m in self.per_seed]))

    @property
    def std(self) -> float:
        vals = [m.test_metric for m in self.per_seed]
        return float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0


def layer_specs_from_config(cfg: RunConfig, num_features: int,
                            num_classes: int) -> list[LayerSpec]:
    """Expand the config's model section into per-layer specs."""
    f_in = num_features + (num_classes if cfg.label_trick.enabled else 0)
    dims = [f_in] + list(cfg.hidden_dims) + [num_classes]
    act = cfg.default_activation
    agg = "norm_adj_attention" if cfg.aggregation == "norm_adj" else "softmax_attention"
    specs = []
    for i in range(len(dims) - 1):
        last = i == len(dims) - 2
        if cfg.model_kind == "gat":
            specs.append(LayerSpec(
                kind="gat", f_in=dims[i], f_out=dims[i + 1],
                act="identity" if last else act,
                heads=1 if last else cfg.heads,
                variant=cfg.attention, aggregation=agg,
                concat=not last, bias=cfg.bias,
                negative_slope=cfg.negative_slope,
                attn_dropout=cfg.attn_dropout,
            ))
            if not last:
                dims[i + 1] = dims[i + 1] * cfg.heads
        else:
            specs.append(LayerSpec(
                kind=cfg.model_kind, f_in=dims[i], f_out=dims[i + 1],
                act="identity" if last else act,
                bias=cfg.bias, renormalize=cfg.renormalize,
            ))
    return specs


def _loss_fn(cfg: RunConfig, bundle: DatasetBundle):
    labels = bundle.labels
    if labels.task == "multilabel":
        return lambda logits, mask: binary_margin_batch(
            logits, labels.y, mask, cfg.loss)
    return lambda logits, mask: composed_ce_loss(
        logits, labels.y, mask, cfg.loss)


def _model_input(cfg: RunConfig, bundle: DatasetBundle,
                 label_input: np.ndarray | None) -> np.ndarray:
    if not cfg.label_trick.enabled:
        return bundle.features
    assert label_input is not None
    return augment_features(bundle.features, label_input)


def evaluate(model: Model, cfg: RunConfig, bundle: DatasetBundle,
             mask: np.ndarray) -> float:
    """Metric on a node mask using the inference-time label protocol."""
    logits = predict(model, cfg, bundle)
    if bundle.labels.task == "multilabel":
        return roc_auc_multilabel(logits, bundle.labels.y, mask)
    return accuracy(logits, bundle.labels, mask)


def predict(model: Model, cfg: RunConfig, bundle: DatasetBundle) -> np.ndarray:
    """Eval-mode logits; with the label trick, all train labels are inputs
    and predictions are recycled for the configured number of passes."""
    labels = bundle.labels
    if not cfg.label_trick.enabled:
        return model.forward(bundle.features, train=False)
    label_input = inference_label_input(labels)
    logits = model.forward(augment_features(bundle.features, label_input),
                           train=False)
    for _ in range(cfg.label_trick.recycle):
        recycled = softmax_rows(logits)
        label_input = label_reuse_step(labels, labels.train_idx, recycled,
                                       cfg.label_trick.reuse_soft)
        logits = model.forward(augment_features(bundle.features, label_input),
                               train=False)
    return logits


def _check_dims(cfg: RunConfig, bundle: DatasetBundle) -> None:
    if cfg.label_trick.enabled and bundle.labels.task == "multilabel":
        raise ConfigError("label trick currently supports multiclass labels only")


def train_single_seed(cfg: RunConfig, bundle: DatasetBundle, seed: int,
                      hooks=None) -> tuple[ParamStore, SeedMetrics, list[str]]:
    """Train one seed; returns the restored-best parameters, metrics, and
    per-epoch log lines (epoch, train_loss, valid_metric)."""
    _check_dims(cfg, bundle)
    rng = np.random.default_rng(seed)
    labels = bundle.labels
    specs = layer_specs_from_config(cfg, bundle.num_features, labels.num_classes)
    model = build_model(specs, bundle.graph, rng, dropout=cfg.dropout)
    adam = AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2,
                     eps=cfg.eps, weight_decay=cfg.weight_decay)
    loss_fn = _loss_fn(cfg, bundle)
    trick = cfg.label_trick

    best_metric = -np.inf
    best_epoch = -1
    best_snapshot = model.store.snapshot()
    stale = 0
    log_lines = []
    loss_curve: list[float] = []
    valid_curve: list[float] = []

    epoch = 0
    for epoch in range(1, cfg.epochs + 1):
        if trick.enabled:
            dl, du = split_train(labels.train_idx, trick.split_ratio, rng)
            label_input = build_label_input(labels, dl)
            if hooks is not None:
                hooks.on_label_input(epoch, 0, label_input, dl, None)
            logits = model.forward(_model_input(cfg, bundle, label_input),
                                   train=True, rng=rng)
            for k in range(1, trick.recycle + 1):
                recycled = softmax_rows(logits)
                label_input = label_reuse_step(labels, dl, recycled,
                                               trick.reuse_soft)
                if hooks is not None:
                    source = recycled if trick.reuse_soft else label_reuse_step(
                        labels, np.empty(0, dtype=np.int64), recycled, False)
                    hooks.on_label_input(epoch, k, label_input, dl, source)
                logits = model.forward(_model_input(cfg, bundle, label_input),
                                       train=True, rng=rng)
            mask = du if trick.labels_on_du_only else labels.train_idx
        else:
            logits = model.forward(bundle.features, train=True, rng=rng)
            mask = labels.train_idx

        loss, d_logits = loss_fn(logits, mask)
        if not np.isfinite(loss):
            raise RunError(f"non-finite training loss at epoch {epoch}")
        model.store.zero_grads()
        model.backward(d_logits)
        adam_step(model.store, adam)

        valid_metric = evaluate(model, cfg, bundle, labels.valid_idx)
        loss_curve.append(loss)
        valid_curve.append(valid_metric)
        log_lines.append(f"{epoch},{loss:.10g},{valid_metric:.10g}")

        if valid_metric > best_metric:
            best_metric = valid_metric
            best_epoch = epoch
            best_snapshot = model.store.snapshot()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break

    model.store.restore(best_snapshot)
    test_metric = evaluate(model, cfg, bundle, labels.test_idx)
    metrics = SeedMetrics(
        seed=seed,
        test_metric=test_metric,
        valid_metric=best_metric,
        best_epoch=best_epoch,
        epochs_run=epoch,
        train_loss_curve=loss_curve,
        valid_curve=valid_curve,
    )
    return model.store, metrics, log_lines


def train(cfg: RunConfig, bundle: DatasetBundle, hooks=None):
    """Train over all configured seeds; returns (TrainResult, last ParamStore,
    log lines tagged by seed)."""
    per_seed = []
    logs: list[str] = ["seed,epoch,train_loss,valid_metric"]
    store = None
    for seed in cfg.seeds:
        store, metrics, lines = train_single_seed(cfg, bundle, seed, hooks=hooks)
        per_seed.append(metrics)
        logs.extend(f"{seed},{line}" for line in lines)
    metric_name = "rocauc" if bundle.labels.task == "multilabel" else "accuracy"
    return TrainResult(per_seed=per_seed, metric_name=metric_name), store, logs


def metrics_to_json(cfg: RunConfig, bundle: DatasetBundle,
                    result: TrainResult) -> dict:
    return {
        "schema": METRICS_SCHEMA_VERSION,
        "dataset": bundle.meta.name,
        "metric": result.metric_name,
        "loss": {"kind": cfg.loss.kind, "epsilon": cfg.loss.epsilon,
                 "q": cfg.loss.q},
        "config": cfg.to_flat_dict(),
        "seeds": list(cfg.seeds),
        "per_seed": [
            {
                "seed": m.seed,
                "test_metric": m.test_metric,
                "valid_metric": m.valid_metric,
                "best_epoch": m.best_epoch,
                "epochs_run": m.epochs_run,
            }
            for m in result.per_seed
        ],
        "mean_test_metric": result.mean,
        "std_test_metric": result.std,
    }


# ---------------------------------------------------------------------------
# ablations
# ---------------------------------------------------------------------------

LABEL_TRICK_MODES = {
    "off": ["label_trick.enabled=false"],
    "input": ["label_trick.enabled=true", "label_trick.recycle=0"],
    "reuse": ["label_trick.enabled=true", "label_trick.recycle=1"],
}


@dataclass
class AblationCell:
    name: str
    overrides: list[str]
    result: TrainResult | None = None
    error: str | None = None


def expand_axes(axes: dict[str, list[str]]) -> list[tuple[str, list[str]]]:
    """Cartesian product of axis values -> (cell name, override list)."""
    cells: list[tuple[str, list[str]]] = [("base", [])]
    for key, values in axes.items():
        new_cells = []
        for name, overrides in cells:
            for value in values:
                if key == "label_trick.mode":
                    if value not in LABEL_TRICK_MODES:
                        raise ConfigError(
                            f"label_trick.mode must be one of "
                            f"{sorted(LABEL_TRICK_MODES)}"
                        )
                    extra = LABEL_TRICK_MODES[value]
                else:
                    extra = [f"{key}={value}"]
                cell_name = value if name == "base" else f"{name}/{value}"
                new_cells.append((cell_name, overrides + extra))
        cells = new_cells
    return cells


def _assert_isolated(base: RunConfig, cells: list[AblationCell],
                     axes: dict[str, list[str]]) -> None:
    """Within one ablation only the varied axis keys may differ."""
    allowed = set()
    for key in axes:
        if key == "label_trick.mode":
            allowed.update(("label_trick.enabled", "label_trick.recycle"))
        else:
            allowed.add(key)
    base_flat = base.to_flat_dict()
    for cell in cells:
        flat = base.with_overrides(cell.overrides).to_flat_dict()
        diff = {k for k in flat if flat[k] != base_flat[k]}
        if not diff <= allowed:
            raise ConfigError(
                f"ablation cell {cell.name!r} varies non-axis keys: "
                f"{sorted(diff - allowed)}"
            )


def run_ablation(base_cfg: RunConfig, axes: dict[str, list[str]],
                 bundle: DatasetBundle) -> list[AblationCell]:
    """Run every cell of the axis product; per-cell errors are recorded and
    the remaining cells still run."""
    cells = [AblationCell(name=n, overrides=o) for n, o in expand_axes(axes)]
    _assert_isolated(base_cfg, cells, axes)
    for cell in cells:
        try:
            cfg = base_cfg.with_overrides(cell.overrides)
            cell.result, _, _ = train(cfg, bundle)
        except Exception as e:  # noqa: BLE001 - cell errors are data
            cell.error = f"{type(e).__name__}: {e}"
    return cells


def ablation_table_md(dataset: str, model: str,
                      cells: list[AblationCell]) -> str:
    lines = [
        "| dataset | model | cell | metric |",
        "| --- | --- | --- | --- |",
    ]
    for cell in cells:
        if cell.error is not None:
            value = f"error: {cell.error}"
        else:
            value = f"{100 * cell.result.mean:.2f} ± {100 * cell.result.std:.2f}"
        lines.append(f"| {dataset} | {model} | {cell.name} | {value} |")
    return "\n".join(lines) + "\n"


def ablation_json(base_cfg: RunConfig, cells: list[AblationCell]) -> dict:
    return {
        "schema": METRICS_SCHEMA_VERSION,
        "base_config": base_cfg.to_flat_dict(),
        "cells": [
            {
                "name": c.name,
                "overrides": c.overrides,
                "error": c.error,
                "mean_test_metric": None if c.result is None else c.result.mean,
                "std_test_metric": None if c.result is None else c.result.std,
                "per_seed": None if c.result is None else [
                    {"seed": m.seed, "test_metric": m.test_metric}
                    for m in c.result.per_seed
                ],
            }
            for c in cells
        ],
    }
