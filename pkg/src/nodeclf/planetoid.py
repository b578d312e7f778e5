"""Adapter for the public Planetoid citation files (ind.<name>.*).

Converts the pickled ``ind.<name>.{x,y,tx,ty,allx,ally,graph}`` files plus
``ind.<name>.test.index`` into this package's plain-text dataset format.
The standard splits come out as: train = the first len(y) nodes, valid = the
following 500, test = the test.index nodes.  Citeseer's isolated test
indices (gaps in test.index) are padded with zero feature/label rows, the
usual convention.

This is deliberately a thin, separate adapter: the engine only ever reads
the text format produced by ``convert``.
"""

from __future__ import annotations

import pickle
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .data import DatasetBundle, DatasetMeta, LabelSet, save_bundle
from .errors import DataError
from .graph import build_csr

_PARTS = ("x", "y", "tx", "ty", "allx", "ally", "graph")


def _load_part(path: Path):
    with path.open("rb") as f:
        return pickle.load(f, encoding="latin1")


def load_planetoid(raw_dir: str | Path, name: str) -> DatasetBundle:
    """Build an in-memory bundle from raw Planetoid files."""
    d = Path(raw_dir)
    parts = {}
    for part in _PARTS:
        path = d / f"ind.{name}.{part}"
        if not path.exists():
            raise DataError(f"missing Planetoid file {path.name}")
        parts[part] = _load_part(path)
    idx_path = d / f"ind.{name}.test.index"
    if not idx_path.exists():
        raise DataError(f"missing Planetoid file {idx_path.name}")
    test_idx = np.array(
        [int(line) for line in idx_path.read_text().split()], dtype=np.int64
    )

    allx = sp.csr_matrix(parts["allx"]).toarray().astype(np.float64)
    tx = sp.csr_matrix(parts["tx"]).toarray().astype(np.float64)
    ally = np.asarray(parts["ally"], dtype=np.float64)
    ty = np.asarray(parts["ty"], dtype=np.float64)

    span = np.arange(test_idx.min(), test_idx.max() + 1, dtype=np.int64)
    num_nodes = allx.shape[0] + span.size
    feat_dim, num_classes = allx.shape[1], ally.shape[1]

    features = np.zeros((num_nodes, feat_dim))
    y = np.zeros((num_nodes, num_classes))
    features[:allx.shape[0]] = allx
    y[:ally.shape[0]] = ally
    # tx/ty rows follow test.index file order; gap rows (citeseer) stay zero
    features[test_idx] = tx
    y[test_idx] = ty

    graph_dict = parts["graph"]
    edges = []
    for src, nbrs in graph_dict.items():
        for dst in nbrs:
            if src != dst:
                edges.append((int(src), int(dst)))
    graph = build_csr(edges, num_nodes, symmetrize=True, dedup=True)

    num_train = parts["y"].shape[0]
    train_idx = np.arange(num_train, dtype=np.int64)
    # standard protocol: the 500 nodes after the train block validate
    n_valid = min(500, allx.shape[0] - num_train)
    valid_idx = np.arange(num_train, num_train + n_valid, dtype=np.int64)

    labels = LabelSet(
        y=y,
        train_idx=train_idx,
        valid_idx=valid_idx,
        test_idx=np.sort(test_idx),
        task="multiclass",
    )
    meta = DatasetMeta(
        name=name,
        num_classes=num_classes,
        metric="accuracy",
        normalize_features=True,
    )
    return DatasetBundle(graph=graph, features=features, labels=labels, meta=meta)


def convert(raw_dir: str | Path, name: str, out_dir: str | Path) -> Path:
    """Convert raw Planetoid files and write the text-format dataset.

    The saved meta keeps ``normalize_features=True`` so loading applies the
    standard per-row L1 feature normalization.
    """
    bundle = load_planetoid(raw_dir, name)
    out = save_bundle(bundle, out_dir)
    # save_bundle writes the bundle's in-memory meta; flip the stored flag so
    # loaders apply row normalization to the raw 0/1 bag-of-words counts
    meta_path = Path(out) / "meta.json"
    text = meta_path.read_text(encoding="utf-8")
    meta_path.write_text(
        text.replace('"normalize_features": false', '"normalize_features": true'),
        encoding="utf-8",
    )
    return out
