"""Run configuration: flat ``section.key = value`` files plus overrides.

Every key is registered with a parser and a default; unknown keys raise a
ConfigError that lists the valid ones.  ``RunConfig.to_flat_dict`` gives the
canonical flattened form used for metrics.json and for checking that
ablation cells differ only on the axes being varied.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .label_tricks import LabelTrickConfig
from .losses import DEFAULT_EPSILON, DEFAULT_Q, LOSS_KINDS, LossSpec


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "1", "yes", "on"):
        return True
    if v in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {s!r}")


def _parse_int_list(s: str) -> list[int]:
    s = s.strip()
    if not s:
        return []
    return [int(v) for v in s.split(",")]


def _parse_choice(options):
    def parse(s: str) -> str:
        v = s.strip()
        if v not in options:
            raise ConfigError(f"expected one of {options}, got {s!r}")
        return v
    return parse


# key -> (parser, default)
VALID_KEYS: dict[str, tuple] = {
    "data.path": (str, ""),
    "model.kind": (_parse_choice(("mlp", "gcn", "resgcn", "gat")), "gcn"),
    "model.hidden_dims": (_parse_int_list, [16]),
    "model.heads": (int, 8),
    "model.attention": (_parse_choice(
        ("original", "simplified", "non_interactive", "edge_feature")), "original"),
    "model.aggregation": (_parse_choice(("softmax", "norm_adj")), "softmax"),
    "model.dropout": (float, 0.5),
    "model.attn_dropout": (float, 0.0),
    "model.activation": (str, ""),
    "model.negative_slope": (float, 0.2),
    "model.bias": (_parse_bool, True),
    "model.renormalize": (_parse_bool, True),
    "loss.kind": (_parse_choice(LOSS_KINDS), "logistic"),
    "loss.q": (float, DEFAULT_Q),
    "loss.epsilon": (float, DEFAULT_EPSILON),
    "label_trick.enabled": (_parse_bool, False),
    "label_trick.split_ratio": (float, 0.5),
    "label_trick.recycle": (int, 0),
    "label_trick.reuse_soft": (_parse_bool, True),
    "label_trick.labels_on_dU_only": (_parse_bool, False),
    "optim.lr": (float, 0.01),
    "optim.beta1": (float, 0.9),
    "optim.beta2": (float, 0.999),
    "optim.eps": (float, 1e-8),
    "optim.weight_decay": (float, 5e-4),
    "train.epochs": (int, 1000),
    "train.patience": (int, 100),
    "train.seeds": (_parse_int_list, [0]),
    "output.dir": (str, "runs/out"),
    "lpa.lambda": (float, 0.9),
    "lpa.max_iters": (int, 1000),
    "lpa.tol": (float, 1e-9),
}


def _unknown_key_error(key: str) -> ConfigError:
    listing = "\n  ".join(sorted(VALID_KEYS))
    return ConfigError(f"unknown config key {key!r}; valid keys:\n  {listing}")


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines into a raw {key: parsed_value} dict."""
    out: dict = {}
    for ln, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{ln}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key not in VALID_KEYS:
            raise _unknown_key_error(key)
        parser, _ = VALID_KEYS[key]
        try:
            out[key] = parser(value.strip())
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{source}:{ln}: bad value for {key}: {e}") from e
    return out


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply ``--set key=value`` strings on top of a raw config dict."""
    out = dict(raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value")
        key, _, value = item.partition("=")
        key = key.strip()
        if key not in VALID_KEYS:
            raise _unknown_key_error(key)
        parser, _ = VALID_KEYS[key]
        try:
            out[key] = parser(value.strip())
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad value for {key}: {e}") from e
    return out


@dataclass
class RunConfig:
    """Everything a training run needs, resolved to native types."""

    data_path: str = ""
    model_kind: str = "gcn"
    hidden_dims: list[int] = field(default_factory=lambda: [16])
    heads: int = 8
    attention: str = "original"
    aggregation: str = "softmax"
    dropout: float = 0.5
    attn_dropout: float = 0.0
    activation: str = ""
    negative_slope: float = 0.2
    bias: bool = True
    renormalize: bool = True
    loss: LossSpec = field(default_factory=LossSpec)
    label_trick: LabelTrickConfig = field(default_factory=LabelTrickConfig)
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 5e-4
    epochs: int = 1000
    patience: int = 100
    seeds: list[int] = field(default_factory=lambda: [0])
    output_dir: str = "runs/out"
    lpa_lambda: float = 0.9
    lpa_max_iters: int = 1000
    lpa_tol: float = 1e-9

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")

    @property
    def default_activation(self) -> str:
        if self.activation:
            return self.activation
        return "elu" if self.model_kind == "gat" else "relu"

    @classmethod
    def from_raw(cls, raw: dict) -> "RunConfig":
        get = lambda k: raw.get(k, VALID_KEYS[k][1])
        return cls(
            data_path=get("data.path"),
            model_kind=get("model.kind"),
            hidden_dims=list(get("model.hidden_dims")),
            heads=get("model.heads"),
            attention=get("model.attention"),
            aggregation=get("model.aggregation"),
            dropout=get("model.dropout"),
            attn_dropout=get("model.attn_dropout"),
            activation=get("model.activation"),
            negative_slope=get("model.negative_slope"),
            bias=get("model.bias"),
            renormalize=get("model.renormalize"),
            loss=LossSpec(kind=get("loss.kind"), q=get("loss.q"),
                          epsilon=get("loss.epsilon")),
            label_trick=LabelTrickConfig(
                enabled=get("label_trick.enabled"),
                split_ratio=get("label_trick.split_ratio"),
                recycle=get("label_trick.recycle"),
                reuse_soft=get("label_trick.reuse_soft"),
                labels_on_du_only=get("label_trick.labels_on_dU_only"),
            ),
            lr=get("optim.lr"),
            beta1=get("optim.beta1"),
            beta2=get("optim.beta2"),
            eps=get("optim.eps"),
            weight_decay=get("optim.weight_decay"),
            epochs=get("train.epochs"),
            patience=get("train.patience"),
            seeds=list(get("train.seeds")),
            output_dir=get("output.dir"),
            lpa_lambda=get("lpa.lambda"),
            lpa_max_iters=get("lpa.max_iters"),
            lpa_tol=get("lpa.tol"),
        )

    @classmethod
    def from_file(cls, path: str | Path, overrides: list[str] | None = None):
        raw = parse_config_text(Path(path).read_text(encoding="utf-8"), str(path))
        raw = apply_overrides(raw, overrides or [])
        return cls.from_raw(raw)

    def to_flat_dict(self) -> dict:
        return {
            "data.path": self.data_path,
            "model.kind": self.model_kind,
            "model.hidden_dims": list(self.hidden_dims),
            "model.heads": self.heads,
            "model.attention": self.attention,
            "model.aggregation": self.aggregation,
            "model.dropout": self.dropout,
            "model.attn_dropout": self.attn_dropout,
            "model.activation": self.activation,
            "model.negative_slope": self.negative_slope,
            "model.bias": self.bias,
            "model.renormalize": self.renormalize,
            "loss.kind": self.loss.kind,
            "loss.q": self.loss.q,
            "loss.epsilon": self.loss.epsilon,
            "label_trick.enabled": self.label_trick.enabled,
            "label_trick.split_ratio": self.label_trick.split_ratio,
            "label_trick.recycle": self.label_trick.recycle,
            "label_trick.reuse_soft": self.label_trick.reuse_soft,
            "label_trick.labels_on_dU_only": self.label_trick.labels_on_du_only,
            "optim.lr": self.lr,
            "optim.beta1": self.beta1,
            "optim.beta2": self.beta2,
            "optim.eps": self.eps,
            "optim.weight_decay": self.weight_decay,
            "train.epochs": self.epochs,
            "train.patience": self.patience,
            "train.seeds": list(self.seeds),
            "output.dir": self.output_dir,
            "lpa.lambda": self.lpa_lambda,
            "lpa.max_iters": self.lpa_max_iters,
            "lpa.tol": self.lpa_tol,
        }

    def with_overrides(self, overrides: list[str]) -> "RunConfig":
        raw = {}
        flat = self.to_flat_dict()
        for key, value in flat.items():
            raw[key] = value
        for item in overrides:
            key, _, value = item.partition("=")
            key = key.strip()
            if key not in VALID_KEYS:
                raise _unknown_key_error(key)
            parser, _ = VALID_KEYS[key]
            raw[key] = parser(value.strip()) if isinstance(value, str) else value
        return RunConfig.from_raw(raw)
