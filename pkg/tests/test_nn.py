import numpy as np
import pytest

from nodeclf.errors import InputError
from nodeclf.gradcheck import check_full_model
from nodeclf.nn import (
    AdamState,
    ParamStore,
    activation,
    activation_grad,
    adam_step,
    affine,
    affine_backward,
    dropout_mask,
    glorot_init,
    grad_check,
    softmax_rows,
    softmax_rows_backward,
)


class TestGlorotInit:
    def test_single_entry_bound(self):
        rng = np.random.default_rng(3)
        w = glorot_init(1, 1, rng)
        assert abs(w[0, 0]) <= np.sqrt(3.0)

    def test_same_seed_identical(self):
        a = glorot_init(8, 8, np.random.default_rng(42))
        b = glorot_init(8, 8, np.random.default_rng(42))
        assert np.array_equal(a, b)

    def test_large_sample_mean_near_zero(self):
        w = glorot_init(100, 100, np.random.default_rng(0))
        assert abs(w.mean()) < 0.02
        assert np.abs(w).max() <= np.sqrt(6.0 / 200.0)

    def test_bad_dims(self):
        with pytest.raises(InputError):
            glorot_init(0, 3, np.random.default_rng(0))


class TestAffine:
    def test_identity_weight(self, rng):
        x = rng.normal(size=(4, 3))
        assert np.array_equal(affine(x, np.eye(3)), x)

    def test_zero_upstream_gradient(self, rng):
        x = rng.normal(size=(4, 3))
        w = rng.normal(size=(3, 2))
        d_x, d_w, d_b = affine_backward(np.zeros((4, 2)), x, w, with_bias=True)
        assert not d_x.any() and not d_w.any() and not d_b.any()

    def test_shape_mismatch(self):
        with pytest.raises(InputError):
            affine(np.zeros((2, 3)), np.zeros((4, 2)))

    def test_gradients_match_finite_differences(self, rng):
        x0 = rng.normal(size=(3, 2))
        w0 = rng.normal(size=(2, 2))
        coeff = rng.normal(size=(3, 2))
        store = ParamStore()
        xp = store.add("x", x0)
        wp = store.add("w", w0)
        bp = store.add("b", rng.normal(size=(1, 2)))

        def loss_fn():
            store.zero_grads()
            out = affine(xp.value, wp.value, bp.value)
            d_x, d_w, d_b = affine_backward(coeff, xp.value, wp.value,
                                            with_bias=True)
            xp.grad[...] = d_x
            wp.grad[...] = d_w
            bp.grad[...] = d_b
            return float(np.sum(out * coeff))

        worst = grad_check(loss_fn, store, h=1e-5, sample_count=12)
        assert worst < 1e-6


class TestActivations:
    def test_relu_values(self):
        assert activation(np.array([-1.0, 2.0]), "relu").tolist() == [0.0, 2.0]

    def test_leaky_relu_negative_side(self):
        out = activation(np.array([-1.0]), "leaky_relu", slope=0.2)
        assert out[0] == pytest.approx(-0.2)

    def test_kink_convention_left_value(self):
        z = np.array([0.0])
        assert activation_grad(z, "relu")[0] == 0.0
        assert activation_grad(z, "leaky_relu", slope=0.3)[0] == 0.3

    def test_elu_continuous(self):
        x = np.array([-1e-12, 1e-12])
        out = activation(x, "elu")
        assert np.allclose(out, x, atol=1e-11)

    @pytest.mark.parametrize("kind", ["relu", "leaky_relu", "elu", "identity"])
    def test_backward_matches_finite_differences(self, kind, rng):
        x = rng.normal(size=(4, 3))
        x[np.abs(x) < 0.05] = 0.1  # keep clear of the kink
        h = 1e-6
        fd = (activation(x + h, kind) - activation(x - h, kind)) / (2 * h)
        assert np.abs(fd - activation_grad(x, kind)).max() < 1e-6

    def test_unknown_kind(self):
        with pytest.raises(InputError):
            activation(np.zeros(1), "swish")


class TestSoftmaxRows:
    def test_uniform_row(self):
        out = softmax_rows(np.zeros((1, 4)))
        assert np.allclose(out, 0.25)

    def test_large_values_no_overflow(self):
        out = softmax_rows(np.array([[1000.0, 0.0]]))
        assert np.isfinite(out).all()
        assert out[0, 0] == pytest.approx(1.0)
        assert out[0, 1] < 1e-300

    def test_rows_sum_to_one(self, rng):
        x = rng.normal(size=(50, 7)) * 10
        out = softmax_rows(x)
        assert np.abs(out.sum(axis=1) - 1.0).max() < 1e-12
        assert (out >= 0).all() and (out <= 1).all()

    def test_backward_matches_finite_differences(self, rng):
        x0 = rng.normal(size=(2, 3))
        coeff = rng.normal(size=(2, 3))
        store = ParamStore()
        xp = store.add("x", x0)

        def loss_fn():
            store.zero_grads()
            probs = softmax_rows(xp.value)
            xp.grad[...] = softmax_rows_backward(probs, coeff)
            return float(np.sum(probs * coeff))

        assert grad_check(loss_fn, store, sample_count=6) < 1e-6


class TestAdam:
    def _store(self, value):
        store = ParamStore()
        store.add("w", np.array([[value]]))
        return store

    def test_zero_grads_no_change(self):
        store = self._store(1.5)
        adam_step(store, AdamState(lr=0.1, weight_decay=0.0))
        assert store["w"].value[0, 0] == 1.5

    def test_step_counter_increments(self):
        store = self._store(1.0)
        state = AdamState()
        for expected in (1, 2, 3):
            adam_step(store, state)
            assert state.t == expected

    def test_two_steps_match_manual_arithmetic(self):
        # scalar Adam recomputed with plain python floats
        lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
        store = self._store(1.0)
        state = AdamState(lr=lr, beta1=b1, beta2=b2, eps=eps, weight_decay=0.0)
        grads = [0.5, -0.3]

        w, m, v = 1.0, 0.0, 0.0
        for t, g in enumerate(grads, start=1):
            store["w"].grad[0, 0] = g
            adam_step(store, state)
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            m_hat = m / (1 - b1 ** t)
            v_hat = v / (1 - b2 ** t)
            w -= lr * m_hat / (np.sqrt(v_hat) + eps)
            assert store["w"].value[0, 0] == pytest.approx(w, abs=1e-12)

    def test_lr_zero_is_identity(self):
        store = self._store(2.0)
        store["w"].grad[0, 0] = 1.0
        adam_step(store, AdamState(lr=0.0, weight_decay=0.1))
        assert store["w"].value[0, 0] == 2.0

    def test_decoupled_weight_decay_applied_before_delta(self):
        store = self._store(2.0)
        state = AdamState(lr=0.1, weight_decay=0.5)
        adam_step(store, state)  # grad is zero, so only decay acts
        assert store["w"].value[0, 0] == pytest.approx(2.0 * (1 - 0.1 * 0.5))


class TestParamStore:
    def test_duplicate_name_rejected(self):
        store = ParamStore()
        store.add("w", np.zeros((1, 1)))
        with pytest.raises(InputError):
            store.add("w", np.zeros((1, 1)))

    def test_non_2d_rejected(self):
        with pytest.raises(InputError):
            ParamStore().add("w", np.zeros(3))

    def test_snapshot_restore_roundtrip(self, rng):
        store = ParamStore()
        store.add("w", rng.normal(size=(2, 2)))
        snap = store.snapshot()
        store["w"].value += 1.0
        store.restore(snap)
        assert np.array_equal(store["w"].value, snap["w"])


class TestDropout:
    def test_zero_rate_is_ones(self):
        mask = dropout_mask((3, 3), 0.0, np.random.default_rng(0))
        assert np.array_equal(mask, np.ones((3, 3)))

    def test_scaling_preserves_expectation(self):
        rng = np.random.default_rng(0)
        mask = dropout_mask((2000, 50), 0.4, rng)
        assert mask.mean() == pytest.approx(1.0, abs=0.01)

    def test_bad_rate(self):
        with pytest.raises(InputError):
            dropout_mask((2, 2), 1.0, np.random.default_rng(0))


class TestGradCheck:
    def test_quadratic_loss_exact(self, rng):
        store = ParamStore()
        p = store.add("p", rng.normal(size=(3, 2)))

        def loss_fn():
            store.zero_grads()
            p.grad[...] = p.value
            return float(0.5 * np.sum(p.value ** 2))

        assert grad_check(loss_fn, store, sample_count=6) < 1e-9

    def test_unused_parameter_has_zero_gradient(self, rng):
        store = ParamStore()
        used = store.add("used", rng.normal(size=(2, 2)))
        unused = store.add("unused", rng.normal(size=(2, 2)))

        def loss_fn():
            store.zero_grads()
            used.grad[...] = used.value
            return float(0.5 * np.sum(used.value ** 2))

        _, details = grad_check(loss_fn, store, sample_count=8,
                                return_details=True)
        for name, _, analytic, fd, _ in details:
            if name == "unused":
                assert analytic == 0.0
                assert abs(fd) < 1e-9

    def test_full_two_layer_gcn(self):
        worst = check_full_model(np.random.default_rng(11))
        assert worst < 1e-5

    def test_nonfinite_loss_rejected(self):
        store = ParamStore()
        store.add("p", np.zeros((1, 1)))

        def loss_fn():
            return float("nan")

        with pytest.raises(InputError):
            grad_check(loss_fn, store)
