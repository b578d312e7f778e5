"""Dataset ingestion, synthetic benchmark generation, and round-trip IO.

A dataset directory holds plain-text files:

* ``edges.tsv``       one ``src<TAB>dst`` pair per line, 0-based, ``#`` comments
* ``features.csv``    N lines of comma-separated floats
* ``labels.csv``      N integer class ids (-1 = unlabeled), or comma-separated
                      +-1 values for multi-label tasks
* ``splits.json``     {"train": [...], "valid": [...], "test": [...]}
* ``meta.json``       {"name", "num_classes", "metric", "normalize_features"}
* ``edge_feats.tsv``  optional, aligned line-for-line with edges.tsv

Floats are written with 17 significant digits so a save/load round trip is
bit-exact.  Feature normalization is applied at load time and the in-memory
bundle records ``normalize_features=False`` afterwards: a bundle always
describes its features as final.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import DataError, InputError
from .graph import CsrGraph, build_csr

METRICS = ("accuracy", "rocauc")


@dataclass(frozen=True)
class LabelSet:
    """One-hot (or +-1 multi-label) matrix with disjoint split index sets."""

    y: np.ndarray
    train_idx: np.ndarray
    valid_idx: np.ndarray
    test_idx: np.ndarray
    task: str = "multiclass"

    def __post_init__(self):
        n = self.y.shape[0]
        for name in ("train_idx", "valid_idx", "test_idx"):
            idx = np.asarray(getattr(self, name), dtype=np.int64)
            object.__setattr__(self, name, idx)
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise DataError(f"{name} out of range")
        sets = [set(self.train_idx), set(self.valid_idx), set(self.test_idx)]
        total = sum(len(s) for s in sets)
        if len(sets[0] | sets[1] | sets[2]) != total:
            raise DataError("split index sets must be disjoint")
        if self.task == "multiclass":
            labeled = np.concatenate([self.train_idx, self.valid_idx, self.test_idx])
            if labeled.size and not np.allclose(self.y[labeled].sum(axis=1), 1.0):
                raise DataError("one-hot rows must sum to 1 on labeled nodes")
        elif self.task == "multilabel":
            if not np.all(np.isin(self.y, (-1.0, 1.0))):
                raise DataError("multi-label entries must be -1 or +1")
        else:
            raise DataError(f"unknown task {self.task!r}")

    @property
    def num_classes(self) -> int:
        return self.y.shape[1]

    @property
    def num_train(self) -> int:
        return self.train_idx.size


@dataclass(frozen=True)
class DatasetMeta:
    name: str
    num_classes: int
    metric: str = "accuracy"
    normalize_features: bool = False

    def __post_init__(self):
        if self.metric not in METRICS:
            raise DataError(f"metric must be one of {METRICS}")
        if self.num_classes < 1:
            raise DataError("num_classes must be >= 1")


@dataclass(frozen=True)
class DatasetBundle:
    graph: CsrGraph
    features: np.ndarray
    labels: LabelSet
    meta: DatasetMeta

    def __post_init__(self):
        n = self.graph.num_nodes
        if self.features.shape[0] != n:
            raise DataError("feature rows must equal num_nodes")
        if self.labels.y.shape[0] != n:
            raise DataError("label rows must equal num_nodes")
        if self.labels.num_classes != self.meta.num_classes:
            raise DataError("label width must equal meta.num_classes")

    @property
    def num_features(self) -> int:
        return self.features.shape[1]


def _onehot(classes: np.ndarray, num_classes: int) -> np.ndarray:
    """One-hot rows; class -1 marks an unlabeled node and yields a zero row."""
    if classes.min() < -1 or classes.max() >= num_classes:
        raise DataError("class index out of range")
    out = np.zeros((classes.size, num_classes))
    labeled = classes >= 0
    out[np.flatnonzero(labeled), classes[labeled]] = 1.0
    return out


def _read_edges(path: Path) -> list[tuple[int, int]]:
    edges = []
    for ln, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{path.name}:{ln}: expected 'src<TAB>dst'")
        try:
            edges.append((int(parts[0]), int(parts[1])))
        except ValueError as e:
            raise DataError(f"{path.name}:{ln}: {e}") from e
    return edges


def _read_float_table(path: Path, sep: str) -> np.ndarray:
    rows = []
    width = None
    for ln, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            row = [float(v) for v in line.split(sep)]
        except ValueError as e:
            raise DataError(f"{path.name}:{ln}: {e}") from e
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise DataError(f"{path.name}:{ln}: ragged row")
        rows.append(row)
    if not rows:
        raise DataError(f"{path.name}: empty table")
    return np.asarray(rows, dtype=np.float64)


def load_dataset(directory: str | Path) -> DatasetBundle:
    """Load and validate a dataset directory; see the module docstring."""
    d = Path(directory)
    for required in ("edges.tsv", "features.csv", "labels.csv",
                     "splits.json", "meta.json"):
        if not (d / required).exists():
            raise DataError(f"missing dataset file {required} in {d}")

    try:
        meta_raw = json.loads((d / "meta.json").read_text(encoding="utf-8"))
        meta = DatasetMeta(
            name=str(meta_raw["name"]),
            num_classes=int(meta_raw["num_classes"]),
            metric=str(meta_raw.get("metric", "accuracy")),
            normalize_features=bool(meta_raw.get("normalize_features", False)),
        )
        splits = json.loads((d / "splits.json").read_text(encoding="utf-8"))
    except (KeyError, ValueError, TypeError) as e:
        raise DataError(f"bad meta/splits JSON: {e}") from e

    features = _read_float_table(d / "features.csv", ",")
    n = features.shape[0]

    if meta.metric == "rocauc":
        y = _read_float_table(d / "labels.csv", ",")
        task = "multilabel"
        if y.shape[1] != meta.num_classes:
            raise DataError("label columns must equal num_classes")
    else:
        table = _read_float_table(d / "labels.csv", ",")
        if table.shape[1] != 1:
            raise DataError("multiclass labels.csv must have one class per line")
        classes = table[:, 0].astype(np.int64)
        if np.any(table[:, 0] != classes):
            raise DataError("class ids must be integers")
        y = _onehot(classes, meta.num_classes)
        task = "multiclass"
    if y.shape[0] != n:
        raise DataError("labels.csv row count must match features.csv")

    try:
        labels = LabelSet(
            y=y,
            train_idx=np.asarray(splits["train"], dtype=np.int64),
            valid_idx=np.asarray(splits["valid"], dtype=np.int64),
            test_idx=np.asarray(splits["test"], dtype=np.int64),
            task=task,
        )
    except (KeyError, TypeError) as e:
        raise DataError(f"bad splits.json: {e}") from e

    edges = _read_edges(d / "edges.tsv")
    edge_feats = None
    if (d / "edge_feats.tsv").exists():
        edge_feats = _read_float_table(d / "edge_feats.tsv", "\t")
        if edge_feats.shape[0] != len(edges):
            raise DataError("edge_feats.tsv must align with edges.tsv")
    try:
        graph = build_csr(edges, n, symmetrize=True, dedup=True,
                          edge_feats=edge_feats)
    except InputError as e:
        raise DataError(str(e)) from e

    if meta.normalize_features:
        norms = np.abs(features).sum(axis=1, keepdims=True)
        nz = norms[:, 0] > 0
        features[nz] /= norms[nz]
        meta = replace(meta, normalize_features=False)

    return DatasetBundle(graph=graph, features=features, labels=labels, meta=meta)


def save_bundle(bundle: DatasetBundle, directory: str | Path) -> Path:
    """Write a bundle so that load_dataset reproduces it bit-exactly."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)

    g = bundle.graph
    rows = g.edge_rows()
    with (d / "edges.tsv").open("w", encoding="utf-8") as f:
        for r, c in zip(rows.tolist(), g.col_idx.tolist()):
            f.write(f"{r}\t{c}\n")
    if g.edge_feats is not None:
        with (d / "edge_feats.tsv").open("w", encoding="utf-8") as f:
            for row in g.edge_feats:
                f.write("\t".join(f"{v:.17g}" for v in row) + "\n")

    with (d / "features.csv").open("w", encoding="utf-8") as f:
        for row in bundle.features:
            f.write(",".join(f"{v:.17g}" for v in row) + "\n")

    with (d / "labels.csv").open("w", encoding="utf-8") as f:
        if bundle.labels.task == "multilabel":
            for row in bundle.labels.y:
                f.write(",".join(str(int(v)) for v in row) + "\n")
        else:
            for row in bundle.labels.y:
                c = int(np.argmax(row)) if row.sum() > 0 else -1
                f.write(f"{c}\n")

    (d / "splits.json").write_text(json.dumps({
        "train": bundle.labels.train_idx.tolist(),
        "valid": bundle.labels.valid_idx.tolist(),
        "test": bundle.labels.test_idx.tolist(),
    }), encoding="utf-8")
    (d / "meta.json").write_text(json.dumps({
        "name": bundle.meta.name,
        "num_classes": bundle.meta.num_classes,
        "metric": bundle.meta.metric,
        "normalize_features": bundle.meta.normalize_features,
    }, indent=2), encoding="utf-8")
    return d


def _stratified_split(
    classes: np.ndarray, label_rate: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-class train allocation hitting round(n * label_rate) exactly."""
    n = classes.size
    target = int(round(label_rate * n))
    uniq = np.unique(classes)
    counts = {c: int(np.sum(classes == c)) for c in uniq}
    quota = {c: counts[c] * label_rate for c in uniq}
    base = {c: int(np.floor(quota[c])) for c in uniq}
    leftover = target - sum(base.values())
    by_frac = sorted(uniq, key=lambda c: quota[c] - base[c], reverse=True)
    for c in by_frac[:max(leftover, 0)]:
        base[c] += 1

    train, valid, test = [], [], []
    for c in uniq:
        members = np.flatnonzero(classes == c)
        members = members[rng.permutation(members.size)]
        k = min(base[c], members.size)
        rest = members[k:]
        half = rest.size // 2
        train.extend(members[:k].tolist())
        valid.extend(rest[:half].tolist())
        test.extend(rest[half:].tolist())
    return (np.sort(np.asarray(train, dtype=np.int64)),
            np.sort(np.asarray(valid, dtype=np.int64)),
            np.sort(np.asarray(test, dtype=np.int64)))


def gen_planted_partition(
    n: int,
    num_classes: int,
    p_in: float,
    p_out: float,
    feat_dim: int,
    feat_noise: float,
    label_rate: float,
    rng: np.random.Generator,
    name: str | None = None,
) -> DatasetBundle:
    """Random community graph with class-mean features plus gaussian noise.

    Same-class node pairs are wired with probability ``p_in``, cross-class
    pairs with ``p_out``; features are the class mean plus
    ``feat_noise``-scaled standard normal noise.  Splits are stratified with
    the requested train label rate (exact to within one node).
    """
    if not 0.0 <= p_out < p_in <= 1.0:
        raise InputError("need 0 <= p_out < p_in <= 1")
    if not 0.0 < label_rate < 1.0:
        raise InputError("label_rate must be in (0, 1)")
    if n < num_classes or num_classes < 2:
        raise InputError("need n >= num_classes >= 2")

    classes = rng.integers(0, num_classes, size=n)
    members = [np.flatnonzero(classes == c) for c in range(num_classes)]

    edges: list[tuple[int, int]] = []
    for c1 in range(num_classes):
        for c2 in range(c1, num_classes):
            p = p_in if c1 == c2 else p_out
            if p == 0.0:
                continue
            a, b = members[c1], members[c2]
            if c1 == c2:
                slots = a.size * (a.size - 1) // 2
            else:
                slots = a.size * b.size
            if slots == 0:
                continue
            count = rng.binomial(slots, p)
            if count == 0:
                continue
            # sample distinct slot ids, then decode to node pairs
            chosen = np.unique(rng.integers(0, slots, size=int(count * 1.3) + 16))
            while chosen.size < count:
                extra = rng.integers(0, slots, size=count)
                chosen = np.unique(np.concatenate([chosen, extra]))
            picks = chosen[rng.permutation(chosen.size)][:count]
            if c1 == c2:
                # slot k of the strict upper triangle of a square block
                i = (np.floor((1 + np.sqrt(1 + 8 * picks.astype(np.float64))) / 2)
                     ).astype(np.int64)
                j = (picks - i * (i - 1) // 2).astype(np.int64)
                edges.extend(zip(a[j].tolist(), a[i].tolist()))
            else:
                i, j = np.divmod(picks, b.size)
                edges.extend(zip(a[i].tolist(), b[j].tolist()))

    graph = build_csr(edges, n, symmetrize=True, dedup=True)

    centers = rng.normal(size=(num_classes, feat_dim))
    features = centers[classes] + feat_noise * rng.normal(size=(n, feat_dim))

    train, valid, test = _stratified_split(classes, label_rate, rng)
    labels = LabelSet(y=_onehot(classes, num_classes),
                      train_idx=train, valid_idx=valid, test_idx=test)
    meta = DatasetMeta(
        name=name or f"planted-n{n}-c{num_classes}",
        num_classes=num_classes,
        metric="accuracy",
    )
    return DatasetBundle(graph=graph, features=features, labels=labels, meta=meta)
