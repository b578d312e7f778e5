import numpy as np
import pytest

from nodeclf.errors import ConfigError, InputError
from nodeclf.graph import build_csr, spmm, sym_norm_adj
from nodeclf.lpa import LpaConfig, lpa_closed_form, lpa_iterate, lpa_predict

from conftest import random_symmetric_graph


def two_node_path_adj():
    g = build_csr([(0, 1)], 2, symmetrize=True)
    return sym_norm_adj(g, renormalize=False)


class TestConfig:
    @pytest.mark.parametrize("kwargs", [{"lam": 0.0}, {"lam": 1.0},
                                        {"max_iters": 0}, {"tol": 0.0}])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            LpaConfig(**kwargs)


class TestIterate:
    def test_tiny_lambda_keeps_initial_labels(self):
        adj = two_node_path_adj()
        y0 = np.array([[1.0], [0.0]])
        y, _ = lpa_iterate(adj, y0, LpaConfig(lam=1e-12, max_iters=50))
        assert np.allclose(y, y0, atol=1e-10)

    def test_two_node_path_converges_to_thirds(self):
        adj = two_node_path_adj()
        y0 = np.array([[1.0], [0.0]])
        y, _ = lpa_iterate(adj, y0, LpaConfig(lam=0.5, max_iters=500, tol=1e-14))
        assert np.abs(y - np.array([[2.0 / 3.0], [1.0 / 3.0]])).max() < 1e-12

    def test_isolated_labeled_node_stabilizes_after_one_step(self):
        g = build_csr([(0, 1)], 3, symmetrize=True)  # node 2 isolated
        adj = sym_norm_adj(g, renormalize=False)
        y0 = np.zeros((3, 2))
        y0[2, 1] = 1.0
        cfg = LpaConfig(lam=0.5, max_iters=100, tol=1e-13)
        y, _ = lpa_iterate(adj, y0, cfg)
        # zero propagation row: the value settles at (1 - lambda) * y0
        assert y[2, 1] == pytest.approx(0.5, abs=1e-12)

    def test_geometric_convergence_rate(self):
        rng = np.random.default_rng(3)
        g = random_symmetric_graph(rng, 30)
        adj = sym_norm_adj(g, renormalize=False)
        y0 = np.zeros((30, 3))
        y0[rng.integers(0, 30, size=8), rng.integers(0, 3, size=8)] = 1.0
        lam = 0.8
        y = y0.copy()
        prev_delta = None
        for _ in range(25):
            y_next = lam * spmm(adj, y) + (1 - lam) * y0
            delta = np.abs(y_next - y).max()
            if prev_delta is not None and prev_delta > 1e-14:
                assert delta <= lam * prev_delta + 1e-14
            prev_delta = delta
            y = y_next

    def test_row_count_validated(self):
        adj = two_node_path_adj()
        with pytest.raises(InputError):
            lpa_iterate(adj, np.zeros((3, 1)), LpaConfig())


class TestClosedForm:
    def test_two_node_path_hand_inversion(self):
        adj = two_node_path_adj()
        y = lpa_closed_form(adj, np.array([[1.0], [0.0]]), 0.5)
        assert np.abs(y - np.array([[2.0 / 3.0], [1.0 / 3.0]])).max() < 1e-12

    def test_zero_labels_stay_zero(self):
        adj = two_node_path_adj()
        assert not lpa_closed_form(adj, np.zeros((2, 3)), 0.7).any()

    def test_size_guard(self):
        rng = np.random.default_rng(0)
        g = build_csr([(i, i + 1) for i in range(2100)], 2101, symmetrize=True)
        adj = sym_norm_adj(g)
        with pytest.raises(InputError):
            lpa_closed_form(adj, np.zeros((2101, 1)), 0.5)

    def test_iterate_agrees_with_closed_form(self):
        rng = np.random.default_rng(11)
        for trial in range(20):
            n = int(rng.integers(5, 51))
            g = random_symmetric_graph(rng, n)
            adj = sym_norm_adj(g, renormalize=False)
            y0 = np.zeros((n, 3))
            labeled = rng.choice(n, size=max(1, n // 4), replace=False)
            y0[labeled, rng.integers(0, 3, size=labeled.size)] = 1.0
            lam = float(rng.uniform(0.2, 0.95))
            direct = lpa_closed_form(adj, y0, lam)
            iterated, _ = lpa_iterate(adj, y0,
                                      LpaConfig(lam=lam, max_iters=5000,
                                                tol=1e-13))
            assert np.abs(direct - iterated).max() < 1e-9


class TestPredict:
    def test_argmax_with_tie_to_lowest_index(self):
        y = np.array([[0.5, 0.5], [0.2, 0.6]])
        assert lpa_predict(y).tolist() == [0, 1]

    def test_connected_graph_reaches_every_node(self):
        rng = np.random.default_rng(9)
        g = random_symmetric_graph(rng, 25)
        adj = sym_norm_adj(g, renormalize=False)
        y0 = np.zeros((25, 2))
        y0[0, 0] = 1.0
        y, _ = lpa_iterate(adj, y0, LpaConfig(lam=0.9, max_iters=2000,
                                              tol=1e-12))
        assert np.all(y.sum(axis=1) > 0)
