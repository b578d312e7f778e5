"""End-to-end gradient audit: every backward against finite differences.

Builds small random graphs and runs the central-difference checker over each
layer family, every attention variant and aggregation mode, every loss kind,
and a full two-layer model.  Used by the ``gradcheck`` CLI subcommand and by
the test suite.  Activations are chosen smooth (elu/identity) so the finite
differences never straddle a kink.
"""

from __future__ import annotations

import numpy as np

from .data import LabelSet
from .graph import build_csr, sym_norm_adj
from .layers import GATLayer, GCNLayer, LayerSpec, ResGCNLayer, build_model
from .losses import LossSpec, binary_margin_batch, composed_ce_loss
from .nn import ParamStore, grad_check


def _random_graph(rng, n=6, extra_edges=6, edge_dim=0):
    edges = [(i, (i + 1) % n) for i in range(n)]  # ring keeps it connected
    while len(edges) < n + extra_edges:
        i, j = rng.integers(0, n, size=2)
        if i != j:
            edges.append((int(i), int(j)))
    feats = rng.normal(size=(len(edges), edge_dim)) if edge_dim else None
    return build_csr(edges, n, symmetrize=True, dedup=True, edge_feats=feats)


def _weighted_output_loss(out, coeff):
    return float(np.sum(out * coeff))


def check_layer(make_layer, n, f_in, rng, sample_count=40):
    """Grad-check one layer's parameters and its input matrix."""
    store = ParamStore()
    x_param = store.add("x", rng.normal(size=(n, f_in)))
    layer = make_layer(store)
    coeff = rng.normal(size=(n, layer.out_dim))

    def loss_fn():
        store.zero_grads()
        out = layer.forward(x_param.value, train=False)
        d_x = layer.backward(coeff)  # d(loss)/d(out) = coeff
        x_param.grad[...] = d_x
        return _weighted_output_loss(out, coeff)

    return grad_check(loss_fn, store, sample_count=sample_count, rng=rng)


def run_suite(seed: int = 0) -> dict[str, float]:
    """Worst finite-difference relative error per checked component."""
    rng = np.random.default_rng(seed)
    results: dict[str, float] = {}
    n, f_in, f_out = 6, 5, 4

    graph = _random_graph(rng, n=n)
    graph_ef = _random_graph(rng, n=n, edge_dim=3)
    adj = sym_norm_adj(graph, renormalize=False)
    adj_r = sym_norm_adj(graph, renormalize=True)

    results["gcn"] = check_layer(
        lambda store: GCNLayer("gcn", adj, f_in, f_out, store, rng, act="elu"),
        n, f_in, rng)
    results["gcn_renorm"] = check_layer(
        lambda store: GCNLayer("gcnr", adj_r, f_in, f_out, store, rng, act="elu"),
        n, f_in, rng)
    results["resgcn"] = check_layer(
        lambda store: ResGCNLayer("res", adj_r, f_in, f_out, store, rng, act="elu"),
        n, f_in, rng)

    for variant in ("original", "simplified", "non_interactive"):
        results[f"gat_{variant}"] = check_layer(
            lambda store, v=variant: GATLayer(
                "gat", graph, f_in, f_out, 2, store, rng,
                variant=v, act="elu"),
            n, f_in, rng)
    results["gat_edge_feature"] = check_layer(
        lambda store: GATLayer("gat", graph_ef, f_in, f_out, 2, store, rng,
                               variant="edge_feature", act="elu"),
        n, f_in, rng)
    for variant in ("original", "simplified"):
        results[f"gat_norm_adj_{variant}"] = check_layer(
            lambda store, v=variant: GATLayer(
                "gat", graph, f_in, f_out, 2, store, rng,
                variant=v, aggregation="norm_adj_attention", act="elu"),
            n, f_in, rng)
    results["gat_avg_heads"] = check_layer(
        lambda store: GATLayer("gat", graph, f_in, f_out, 3, store, rng,
                               variant="original", act="identity",
                               concat=False),
        n, f_in, rng)

    # losses: gradient of the scalar loss with respect to the logits
    classes = rng.integers(0, 3, size=n)
    y = np.zeros((n, 3))
    y[np.arange(n), classes] = 1.0
    mask = np.arange(n)
    for kind in ("logistic", "sigmoid", "savage", "lq", "loge", "exponential"):
        spec = LossSpec(kind)
        store = ParamStore()
        logits = store.add("logits", rng.normal(size=(n, 3)))

        def loss_fn(spec=spec, logits=logits):
            store.zero_grads()
            loss, d = composed_ce_loss(logits.value, y, mask, spec)
            logits.grad[...] = d
            return loss

        results[f"loss_{kind}"] = grad_check(loss_fn, store, sample_count=18,
                                             rng=rng)

    labels_pm = np.where(rng.random((n, 2)) < 0.5, -1.0, 1.0)
    for kind in ("logistic", "loge", "savage"):
        spec = LossSpec(kind)
        store = ParamStore()
        scores = store.add("scores", rng.normal(size=(n, 2)))

        def loss_fn(spec=spec, scores=scores):
            store.zero_grads()
            loss, d = binary_margin_batch(scores.value, labels_pm, mask, spec)
            scores.grad[...] = d
            return loss

        results[f"binary_{kind}"] = grad_check(loss_fn, store, sample_count=12,
                                               rng=rng)

    # full model: two GCN layers, cross entropy on a train mask
    results["full_model"] = check_full_model(rng)
    return results


def check_full_model(rng, kind: str = "gcn", sample_count: int = 60) -> float:
    """Two-layer model + composed loss, treating the input as a parameter too."""
    n, f_in, hidden, c = 6, 5, 4, 3
    graph = _random_graph(rng, n=n)
    classes = rng.integers(0, c, size=n)
    y = np.zeros((n, c))
    y[np.arange(n), classes] = 1.0
    labels = LabelSet(y=y, train_idx=np.arange(4), valid_idx=np.array([4]),
                      test_idx=np.array([5]))

    store = ParamStore()
    x_param = store.add("x", rng.normal(size=(n, f_in)))
    specs = [
        LayerSpec(kind=kind, f_in=f_in, f_out=hidden, act="elu"),
        LayerSpec(kind=kind, f_in=hidden, f_out=c, act="identity"),
    ]
    model = build_model(specs, graph, rng, dropout=0.0, store=store)
    spec = LossSpec("loge")

    def loss_fn():
        store.zero_grads()
        logits = model.forward(x_param.value, train=False)
        loss, d_logits = composed_ce_loss(logits, labels.y, labels.train_idx, spec)
        d_x = model.backward(d_logits)
        x_param.grad[...] = d_x
        return loss

    return grad_check(loss_fn, store, sample_count=sample_count, rng=rng)
