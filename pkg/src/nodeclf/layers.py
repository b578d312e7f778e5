"""Graph layers with explicit backward passes.

Three layer families:

* ``GCNLayer``       -- act(S @ X @ W), S a symmetric-normalized adjacency.
* ``ResGCNLayer``    -- act(S~ @ X @ W0 + X @ W1): the renormalized propagation
                        plus a free linear path that keeps representations
                        distinguishable however deep the stack gets.
* ``GATLayer``       -- masked neighborhood attention.  Four ways to score an
                        edge (``original``, ``simplified``, ``non_interactive``,
                        ``edge_feature``) and two ways to aggregate:
                        plain softmax attention, or the symmetric-normalized
                        attention matrix D~^{-1/2}(I + D alpha)D~^{-1/2} plus a
                        linear term, which reduces to ResGCNLayer under
                        uniform attention.

``build_model`` wires layers into a Model with per-layer input dropout.
Attention rows are per destination node: row i of the CSR topology lists the
neighborhood the softmax normalizes over.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError
from .graph import CsrGraph, NormalizedAdjacency, propagate, spmm, sym_norm_adj
from .nn import (
    ParamStore,
    activation,
    activation_grad,
    affine,
    affine_backward,
    dropout_mask,
    glorot_init,
)

ATTENTION_VARIANTS = ("original", "simplified", "non_interactive", "edge_feature")
AGGREGATION_MODES = ("softmax_attention", "norm_adj_attention")


# ---------------------------------------------------------------------------
# segment helpers over CSR row boundaries
# ---------------------------------------------------------------------------

def _segment_sum(values: np.ndarray, row_ptr: np.ndarray) -> np.ndarray:
    counts = np.diff(row_ptr)
    out = np.zeros((counts.shape[0],) + values.shape[1:], dtype=values.dtype)
    nonempty = counts > 0
    if nonempty.any():
        out[nonempty] = np.add.reduceat(values, row_ptr[:-1][nonempty], axis=0)
    return out


def _segment_max(values: np.ndarray, row_ptr: np.ndarray) -> np.ndarray:
    counts = np.diff(row_ptr)
    out = np.full((counts.shape[0],) + values.shape[1:], -np.inf, dtype=values.dtype)
    nonempty = counts > 0
    if nonempty.any():
        out[nonempty] = np.maximum.reduceat(values, row_ptr[:-1][nonempty], axis=0)
    return out


def _expand(per_row: np.ndarray, row_ptr: np.ndarray) -> np.ndarray:
    return np.repeat(per_row, np.diff(row_ptr), axis=0)


def neighborhood_softmax(logits: np.ndarray, row_ptr: np.ndarray) -> np.ndarray:
    """Softmax per CSR row segment with per-neighborhood max subtraction."""
    shifted = logits - _expand(_segment_max(logits, row_ptr), row_ptr)
    e = np.exp(shifted)
    denom = _expand(_segment_sum(e, row_ptr), row_ptr)
    return e / denom


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------

class DenseLayer:
    """Plain affine + activation; the MLP building block."""

    def __init__(self, name, f_in, f_out, store: ParamStore, rng,
                 act: str = "relu", bias: bool = True, negative_slope: float = 0.2):
        self.name, self.act, self.slope = name, act, negative_slope
        self.out_dim = f_out
        self.in_dim = f_in
        self.w = store.add(f"{name}.w", glorot_init(f_in, f_out, rng))
        self.b = store.add(f"{name}.b", np.zeros((1, f_out))) if bias else None

    def forward(self, x, train=False, rng=None):
        self._x = x
        self._pre = affine(x, self.w.value, None if self.b is None else self.b.value)
        return activation(self._pre, self.act, self.slope)

    def backward(self, d_out):
        d_pre = activation_grad(self._pre, self.act, self.slope) * d_out
        d_x, d_w, d_b = affine_backward(d_pre, self._x, self.w.value,
                                        with_bias=self.b is not None)
        self.w.grad += d_w
        if self.b is not None:
            self.b.grad += d_b
        return d_x


class GCNLayer:
    """act(S @ X @ W).

    The two linear factors commute, so the transform is applied before the
    propagation whenever the layer narrows (f_in > f_out); that keeps the
    sparse product on the thin matrix, which matters for wide inputs like
    bag-of-words features.  The bias is added after propagation either way.
    """

    def __init__(self, name, adj: NormalizedAdjacency, f_in, f_out,
                 store: ParamStore, rng, act: str = "relu", bias: bool = True,
                 negative_slope: float = 0.2):
        self.name, self.adj, self.act, self.slope = name, adj, act, negative_slope
        self.out_dim = f_out
        self.in_dim = f_in
        self.w = store.add(f"{name}.w", glorot_init(f_in, f_out, rng))
        self.b = store.add(f"{name}.b", np.zeros((1, f_out))) if bias else None

    def forward(self, x, train=False, rng=None):
        if x.shape[1] != self.in_dim:
            raise InputError(f"{self.name}: expected {self.in_dim} columns, got {x.shape[1]}")
        self._transform_first = self.in_dim > self.out_dim
        if self._transform_first:
            self._x = x
            pre = spmm(self.adj, x @ self.w.value)
        else:
            self._p = spmm(self.adj, x)
            pre = self._p @ self.w.value
        if self.b is not None:
            pre = pre + self.b.value
        self._pre = pre
        return activation(self._pre, self.act, self.slope)

    def backward(self, d_out):
        d_pre = activation_grad(self._pre, self.act, self.slope) * d_out
        if self.b is not None:
            self.b.grad += d_pre.sum(axis=0, keepdims=True)
        # S is symmetric, so the transpose propagation reuses the same adjacency
        if self._transform_first:
            d_h = spmm(self.adj, d_pre)
            self.w.grad += self._x.T @ d_h
            return d_h @ self.w.value.T
        d_p, d_w, _ = affine_backward(d_pre, self._p, self.w.value)
        self.w.grad += d_w
        return spmm(self.adj, d_p)


class ResGCNLayer:
    """act(S~ @ X @ W0 + X @ W1) with the renormalized adjacency S~."""

    def __init__(self, name, adj_renorm: NormalizedAdjacency, f_in, f_out,
                 store: ParamStore, rng, act: str = "relu", bias: bool = True,
                 negative_slope: float = 0.2):
        self.name, self.adj, self.act, self.slope = name, adj_renorm, act, negative_slope
        self.out_dim = f_out
        self.in_dim = f_in
        self.w0 = store.add(f"{name}.w0", glorot_init(f_in, f_out, rng))
        self.w1 = store.add(f"{name}.w1", glorot_init(f_in, f_out, rng))
        self.b = store.add(f"{name}.b", np.zeros((1, f_out))) if bias else None

    def forward(self, x, train=False, rng=None):
        if x.shape[1] != self.in_dim:
            raise InputError(f"{self.name}: expected {self.in_dim} columns, got {x.shape[1]}")
        self._x = x
        self._transform_first = self.in_dim > self.out_dim
        if self._transform_first:
            prop = spmm(self.adj, x @ self.w0.value)
        else:
            self._p = spmm(self.adj, x)
            prop = self._p @ self.w0.value
        self._pre = prop + x @ self.w1.value
        if self.b is not None:
            self._pre = self._pre + self.b.value
        return activation(self._pre, self.act, self.slope)

    def backward(self, d_out):
        d_pre = activation_grad(self._pre, self.act, self.slope) * d_out
        self.w1.grad += self._x.T @ d_pre
        if self.b is not None:
            self.b.grad += d_pre.sum(axis=0, keepdims=True)
        if self._transform_first:
            d_h = spmm(self.adj, d_pre)
            self.w0.grad += self._x.T @ d_h
            return d_h @ self.w0.value.T + d_pre @ self.w1.value.T
        self.w0.grad += self._p.T @ d_pre
        return spmm(self.adj, d_pre @ self.w0.value.T) + d_pre @ self.w1.value.T


class GATLayer:
    """Multi-head neighborhood attention over a CSR graph.

    ``softmax_attention`` aggregation adds a self-loop to every node first
    (a softmax over an empty neighborhood is undefined) and computes
    x_i' = act(sum_j alpha_ij W x_j) per head.  ``norm_adj_attention`` keeps
    the graph as given, forms the unnormalized attention matrix by scaling
    the attention row of node i by its degree, and propagates
    D~^{-1/2}(I + D alpha)D~^{-1/2} X W0 + X W1; neighborhoods must already
    be non-empty in this mode.

    Heads are concatenated when ``concat`` (hidden layers) and averaged
    pre-activation otherwise (output layer).
    """

    def __init__(self, name, graph: CsrGraph, f_in, f_out, heads,
                 store: ParamStore, rng, *,
                 variant: str = "original",
                 aggregation: str = "softmax_attention",
                 act: str = "elu", concat: bool = True, bias: bool = True,
                 negative_slope: float = 0.2, attn_dropout: float = 0.0,
                 add_self_loops: bool | None = None):
        if variant not in ATTENTION_VARIANTS:
            raise ConfigError(f"unknown attention variant {variant!r}")
        if aggregation not in AGGREGATION_MODES:
            raise ConfigError(f"unknown aggregation mode {aggregation!r}")
        if variant == "edge_feature" and graph.edge_feats is None:
            raise ConfigError("edge_feature attention requires graph edge features")

        self.name = name
        self.variant = variant
        self.aggregation = aggregation
        self.act, self.slope = act, negative_slope
        self.heads, self.f_in, self.f_out = heads, f_in, f_out
        self.concat = concat
        self.attn_dropout = attn_dropout
        self.out_dim = heads * f_out if concat else f_out
        self.in_dim = f_in

        if add_self_loops is None:
            add_self_loops = aggregation == "softmax_attention"
        self.graph = graph.with_self_loops() if add_self_loops else graph
        if np.any(self.graph.degrees() == 0):
            raise ConfigError(
                "attention needs every node to have at least one neighbor; "
                "enable self-loop augmentation or fix the graph"
            )

        if aggregation == "norm_adj_attention":
            deg = graph.degrees().astype(np.float64)
            deg_t = deg + 1.0
            rows = self.graph.edge_rows()
            # off-diagonal scale d_i / sqrt(d~_i d~_j); I term handled densely
            self._att_scale = deg[rows] / np.sqrt(
                deg_t[rows] * deg_t[self.graph.col_idx]
            )
            self._diag = 1.0 / deg_t

        edge_dim = 0 if self.graph.edge_feats is None else self.graph.edge_feats.shape[1]
        attn_len = {
            "original": 2 * f_out,
            "simplified": 2 * f_in,
            "non_interactive": f_in,
            "edge_feature": 2 * f_in + edge_dim,
        }[variant]
        self._edge_dim = edge_dim

        self.w, self.a, self.w1, self.b = [], [], [], []
        for h in range(heads):
            self.w.append(store.add(f"{name}.h{h}.w", glorot_init(f_in, f_out, rng)))
            self.a.append(store.add(f"{name}.h{h}.a", glorot_init(attn_len, 1, rng)))
            if aggregation == "norm_adj_attention":
                self.w1.append(store.add(f"{name}.h{h}.w1", glorot_init(f_in, f_out, rng)))
            if bias:
                self.b.append(store.add(f"{name}.h{h}.b", np.zeros((1, f_out))))

    # -- attention ---------------------------------------------------------

    def _edge_logits(self, x, h_proj, head):
        """Raw (pre-LeakyReLU) score per stored arc for one head."""
        g = self.graph
        rows, cols = g.edge_rows(), g.col_idx
        a = self.a[head].value.ravel()
        if self.variant == "original":
            f = self.f_out
            s_dst = h_proj @ a[:f]
            s_src = h_proj @ a[f:]
            return s_dst[rows] + s_src[cols], s_dst, s_src, None
        if self.variant == "simplified":
            f = self.f_in
            s_dst = x @ a[:f]
            s_src = x @ a[f:]
            return s_dst[rows] + s_src[cols], s_dst, s_src, None
        if self.variant == "non_interactive":
            s_src = x @ a
            return s_src[cols], None, s_src, None
        # edge_feature
        f = self.f_in
        s_dst = x @ a[:f]
        s_src = x @ a[f:2 * f]
        u = g.edge_feats @ a[2 * f:]
        return s_dst[rows] + s_src[cols] + u, s_dst, s_src, u

    def _head_slice(self, h):
        return slice(h * self.f_out, (h + 1) * self.f_out)

    def _project_heads(self, x, params):
        """One GEMM for all heads: x @ [w_0 | w_1 | ...] -> (N, heads*f_out)."""
        return x @ np.hstack([p.value for p in params])

    def attention_weights(self, x: np.ndarray) -> np.ndarray:
        """Per-edge attention, shape (num_edges, heads); rows sum to 1."""
        h_all = self._project_heads(x, self.w) if self.variant == "original" else None
        alphas = []
        for h in range(self.heads):
            h_proj = None if h_all is None else h_all[:, self._head_slice(h)]
            raw, *_ = self._edge_logits(x, h_proj, h)
            logits = activation(raw, "leaky_relu", self.slope)
            alphas.append(neighborhood_softmax(logits, self.graph.row_ptr))
        return np.stack(alphas, axis=1)

    # -- forward / backward -------------------------------------------------

    def forward(self, x, train=False, rng=None):
        if x.shape[1] != self.f_in:
            raise InputError(f"{self.name}: expected {self.f_in} columns, got {x.shape[1]}")
        g = self.graph
        self._x = x
        self._h_all = self._project_heads(x, self.w)
        r_all = (self._project_heads(x, self.w1)
                 if self.aggregation == "norm_adj_attention" else None)
        self._cache = []
        pres = []
        for h in range(self.heads):
            h_proj = self._h_all[:, self._head_slice(h)]
            raw, s_dst, s_src, u = self._edge_logits(x, h_proj, h)
            logits = activation(raw, "leaky_relu", self.slope)
            alpha = neighborhood_softmax(logits, g.row_ptr)
            if train and self.attn_dropout > 0.0:
                mask = dropout_mask(alpha.shape, self.attn_dropout, rng)
            else:
                mask = None
            alpha_used = alpha if mask is None else alpha * mask

            if self.aggregation == "softmax_attention":
                pre = propagate(g, alpha_used, h_proj)
            else:
                vals = self._att_scale * alpha_used
                z = self._diag[:, None] * h_proj + propagate(g, vals, h_proj)
                pre = z + r_all[:, self._head_slice(h)]
            if self.b:
                pre = pre + self.b[h].value
            pres.append(pre)
            self._cache.append((raw, alpha, mask, alpha_used))

        if self.concat:
            self._pres = pres
            return np.hstack([activation(p, self.act, self.slope) for p in pres])
        self._pre_mean = sum(pres) / self.heads
        return activation(self._pre_mean, self.act, self.slope)

    def backward(self, d_out):
        g = self.graph
        x = self._x
        rows, cols = g.edge_rows(), g.col_idx
        rev = g.reverse_edge_permutation()
        d_x = np.zeros_like(x)
        d_h_all = np.empty_like(self._h_all)
        d_pre_all = (np.empty_like(self._h_all)
                     if self.aggregation == "norm_adj_attention" else None)

        for h in range(self.heads):
            if self.concat:
                sl = slice(h * self.f_out, (h + 1) * self.f_out)
                d_pre = activation_grad(self._pres[h], self.act, self.slope) * d_out[:, sl]
            else:
                d_pre = (activation_grad(self._pre_mean, self.act, self.slope)
                         * d_out) / self.heads

            h_proj = self._h_all[:, self._head_slice(h)]
            raw, alpha, mask, alpha_used = self._cache[h]
            if self.b:
                self.b[h].grad += d_pre.sum(axis=0, keepdims=True)

            if self.aggregation == "softmax_attention":
                d_z = d_pre
                d_alpha_used = np.einsum("ef,ef->e", d_z[rows], h_proj[cols])
                d_h = propagate(g, alpha_used[rev], d_z)
            else:
                d_pre_all[:, self._head_slice(h)] = d_pre
                d_z = d_pre
                vals = self._att_scale * alpha_used
                d_vals = np.einsum("ef,ef->e", d_z[rows], h_proj[cols])
                d_alpha_used = self._att_scale * d_vals
                d_h = self._diag[:, None] * d_z + propagate(g, vals[rev], d_z)

            d_alpha = d_alpha_used if mask is None else d_alpha_used * mask
            inner = _expand(_segment_sum(alpha * d_alpha, g.row_ptr), g.row_ptr)
            d_logits = alpha * (d_alpha - inner)
            d_raw = activation_grad(raw, "leaky_relu", self.slope) * d_logits

            d_s_dst = _segment_sum(d_raw, g.row_ptr)
            d_s_src = _segment_sum(d_raw[rev], g.row_ptr)
            a = self.a[h].value.ravel()
            d_a = np.zeros_like(a)
            if self.variant == "original":
                f = self.f_out
                d_a[:f] = h_proj.T @ d_s_dst
                d_a[f:] = h_proj.T @ d_s_src
                d_h = d_h + np.outer(d_s_dst, a[:f]) + np.outer(d_s_src, a[f:])
            elif self.variant == "simplified":
                f = self.f_in
                d_a[:f] = x.T @ d_s_dst
                d_a[f:] = x.T @ d_s_src
                d_x += np.outer(d_s_dst, a[:f]) + np.outer(d_s_src, a[f:])
            elif self.variant == "non_interactive":
                d_a[:] = x.T @ d_s_src
                d_x += np.outer(d_s_src, a)
            else:  # edge_feature
                f = self.f_in
                d_a[:f] = x.T @ d_s_dst
                d_a[f:2 * f] = x.T @ d_s_src
                d_a[2 * f:] = g.edge_feats.T @ d_raw
                d_x += np.outer(d_s_dst, a[:f]) + np.outer(d_s_src, a[f:2 * f])
            self.a[h].grad += d_a[:, None]
            d_h_all[:, self._head_slice(h)] = d_h

        w_all = np.hstack([p.value for p in self.w])
        d_w_all = x.T @ d_h_all
        d_x += d_h_all @ w_all.T
        for h in range(self.heads):
            self.w[h].grad += d_w_all[:, self._head_slice(h)]
        if d_pre_all is not None:
            w1_all = np.hstack([p.value for p in self.w1])
            d_w1_all = x.T @ d_pre_all
            d_x += d_pre_all @ w1_all.T
            for h in range(self.heads):
                self.w1[h].grad += d_w1_all[:, self._head_slice(h)]
        return d_x


# ---------------------------------------------------------------------------
# model assembly
# ---------------------------------------------------------------------------

@dataclass
class LayerSpec:
    """Declarative description of one layer for build_model."""

    kind: str  # mlp | gcn | resgcn | gat
    f_in: int
    f_out: int
    act: str = "relu"
    heads: int = 1
    variant: str = "original"
    aggregation: str = "softmax_attention"
    concat: bool = True
    bias: bool = True
    negative_slope: float = 0.2
    attn_dropout: float = 0.0
    renormalize: bool = True

    def output_dim(self) -> int:
        if self.kind == "gat" and self.concat:
            return self.heads * self.f_out
        return self.f_out

    def to_dict(self) -> dict:
        return dict(self.__dict__)


class Model:
    """Ordered layer stack with per-layer input dropout."""

    def __init__(self, layers: list, store: ParamStore, dropout: float = 0.0):
        self.layers = layers
        self.store = store
        self.dropout = dropout
        self._masks: list = []

    @property
    def out_dim(self):
        return self.layers[-1].out_dim if self.layers else None

    def forward(self, x, train=False, rng=None):
        self._masks = []
        for layer in self.layers:
            if train and self.dropout > 0.0:
                mask = dropout_mask(x.shape, self.dropout, rng)
                x = x * mask
            else:
                mask = None
            self._masks.append(mask)
            x = layer.forward(x, train=train, rng=rng)
        return x

    def backward(self, d_out):
        for layer, mask in zip(reversed(self.layers), reversed(self._masks)):
            d_out = layer.backward(d_out)
            if mask is not None:
                d_out = d_out * mask
        return d_out


def build_model(
    specs: list[LayerSpec],
    graph: CsrGraph | None,
    rng: np.random.Generator,
    dropout: float = 0.0,
    store: ParamStore | None = None,
) -> Model:
    """Instantiate a Model from layer specs; an empty spec list is identity."""
    store = store if store is not None else ParamStore()
    layers = []
    adj_cache: dict[bool, NormalizedAdjacency] = {}

    def adjacency(renorm: bool) -> NormalizedAdjacency:
        if graph is None:
            raise ConfigError("graph layers need a graph")
        if renorm not in adj_cache:
            adj_cache[renorm] = sym_norm_adj(graph, renormalize=renorm)
        return adj_cache[renorm]

    expected = None
    for i, s in enumerate(specs):
        if expected is not None and s.f_in != expected:
            raise ConfigError(
                f"layer {i}: input dim {s.f_in} does not match previous output {expected}"
            )
        name = f"l{i}"
        common = dict(act=s.act, bias=s.bias, negative_slope=s.negative_slope)
        if s.kind == "mlp":
            layer = DenseLayer(name, s.f_in, s.f_out, store, rng, **common)
        elif s.kind == "gcn":
            layer = GCNLayer(name, adjacency(s.renormalize), s.f_in, s.f_out,
                             store, rng, **common)
        elif s.kind == "resgcn":
            layer = ResGCNLayer(name, adjacency(True), s.f_in, s.f_out,
                                store, rng, **common)
        elif s.kind == "gat":
            layer = GATLayer(name, graph, s.f_in, s.f_out, s.heads, store, rng,
                             variant=s.variant, aggregation=s.aggregation,
                             concat=s.concat, attn_dropout=s.attn_dropout,
                             **common)
        else:
            raise ConfigError(f"unknown layer kind {s.kind!r}")
        layers.append(layer)
        expected = layer.out_dim
    return Model(layers, store, dropout=dropout)
