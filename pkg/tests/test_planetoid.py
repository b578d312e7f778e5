"""Converter checks against hand-built raw citation files."""

import pickle

import numpy as np
import pytest
import scipy.sparse as sp

from nodeclf.data import load_dataset
from nodeclf.errors import DataError
from nodeclf.planetoid import convert, load_planetoid


def write_fake_planetoid(d, name="toy"):
    """8 nodes: 3 train, 2 'validation pool', 3 test (one index gap style)."""
    rng = np.random.default_rng(0)
    n_train, n_valid, n_test = 3, 2, 3
    n_all = n_train + n_valid  # allx covers train + extra pool
    feat_dim, c = 4, 2

    allx = sp.csr_matrix(rng.random((n_all, feat_dim)))
    tx = sp.csr_matrix(rng.random((n_test, feat_dim)))
    ally = np.zeros((n_all, c))
    ally[np.arange(n_all), rng.integers(0, c, n_all)] = 1
    ty = np.zeros((n_test, c))
    ty[np.arange(n_test), rng.integers(0, c, n_test)] = 1
    x = allx[:n_train]
    y = ally[:n_train]

    graph = {0: [1, 2], 1: [0], 2: [0, 5], 3: [4], 4: [3], 5: [2, 6],
             6: [5, 7], 7: [6]}
    test_index = [7, 5, 6]  # shuffled file order

    parts = {"x": x, "y": y, "tx": tx, "ty": ty, "allx": allx, "ally": ally,
             "graph": graph}
    for part, obj in parts.items():
        with (d / f"ind.{name}.{part}").open("wb") as f:
            pickle.dump(obj, f)
    (d / f"ind.{name}.test.index").write_text(
        "\n".join(str(i) for i in test_index) + "\n")
    return tx.toarray(), ty, test_index


class TestPlanetoidConverter:
    def test_layout_and_splits(self, tmp_path):
        write_fake_planetoid(tmp_path)
        bundle = load_planetoid(tmp_path, "toy")
        assert bundle.graph.num_nodes == 8
        assert bundle.labels.train_idx.tolist() == [0, 1, 2]
        assert bundle.labels.valid_idx.tolist() == [3, 4]
        assert bundle.labels.test_idx.tolist() == [5, 6, 7]
        assert bundle.meta.normalize_features is True

    def test_tx_rows_land_on_file_order_indices(self, tmp_path):
        tx, ty, test_index = write_fake_planetoid(tmp_path)
        bundle = load_planetoid(tmp_path, "toy")
        for row, node in enumerate(test_index):
            assert np.array_equal(bundle.features[node], tx[row])
            assert np.array_equal(bundle.labels.y[node], ty[row])

    def test_graph_is_symmetric_without_duplicates(self, tmp_path):
        write_fake_planetoid(tmp_path)
        bundle = load_planetoid(tmp_path, "toy")
        assert bundle.graph.is_symmetric()
        # 6 undirected edges listed above -> 12 arcs after dedup
        assert bundle.graph.num_edges == 12

    def test_convert_writes_loadable_dataset(self, tmp_path):
        write_fake_planetoid(tmp_path)
        out = convert(tmp_path, "toy", tmp_path / "converted")
        loaded = load_dataset(out)
        assert loaded.graph.num_nodes == 8
        # conversion keeps the normalization directive in the saved meta
        assert np.allclose(np.abs(loaded.features[0]).sum(), 1.0)

    def test_missing_file_reported(self, tmp_path):
        write_fake_planetoid(tmp_path)
        (tmp_path / "ind.toy.graph").unlink()
        with pytest.raises(DataError, match="ind.toy.graph"):
            load_planetoid(tmp_path, "toy")
