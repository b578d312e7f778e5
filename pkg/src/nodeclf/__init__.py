"""Node-classification engine.

Sparse GCN/GAT layers with hand-written backward passes, a family of
margin-based robust losses, label-as-input / label-reuse training, a label
propagation baseline, and a reproducible training harness with a CLI.
"""

from .config import RunConfig
from .data import DatasetBundle, LabelSet, gen_planted_partition, load_dataset, save_bundle
from .errors import (
    ConfigError,
    DataError,
    EngineError,
    InputError,
    LeakageError,
    RunError,
    UndefinedMetricError,
)
from .graph import CsrGraph, NormalizedAdjacency, build_csr, degrees, spmm, sym_norm_adj
from .label_tricks import (
    LabelTrickConfig,
    augment_features,
    build_label_input,
    inference_label_input,
    label_reuse_step,
    split_train,
)
from .layers import GATLayer, GCNLayer, LayerSpec, Model, ResGCNLayer, build_model
from .losses import (
    LossSpec,
    binary_margin_batch,
    ce_loss,
    composed_ce_loss,
    loge_multiclass,
    loss_transform,
    margin_loss,
    margin_loss_grad,
)
from .lpa import LpaConfig, lpa_closed_form, lpa_iterate, lpa_predict
from .metrics import accuracy, roc_auc, roc_auc_multilabel
from .nn import AdamState, ParamStore, adam_step, glorot_init, grad_check, softmax_rows
from .train import TrainResult, run_ablation, train

__version__ = "0.1.0"
