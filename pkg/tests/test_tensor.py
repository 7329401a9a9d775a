import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from maner import tensor as tn
from maner.tensor import IGNORE, AdamState, Tensor, adam_step

from oracles import adam_reference, central_difference, naive_matmul, nll, rel_error


def T(x, grad=True):
    return Tensor(np.asarray(x, dtype=np.float64), requires_grad=grad)


class TestMatmul:
    def test_identity(self):
        out = tn.matmul(T(np.eye(2)), T([[1, 2], [3, 4]]))
        np.testing.assert_array_equal(out.data, [[1, 2], [3, 4]])

    def test_projector(self):
        out = tn.matmul(T([[1, 0], [0, 0]]), T([[5, 6], [7, 8]]))
        np.testing.assert_array_equal(out.data, [[5, 6], [0, 0]])

    def test_against_triple_loop(self):
        rng = np.random.default_rng(3)
        a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
        np.testing.assert_allclose(tn.matmul(T(a), T(b)).data, naive_matmul(a.tolist(), b.tolist()), atol=1e-12)

    def test_shape_mismatch_reports_both_shapes(self):
        with pytest.raises(tn.DimensionError, match=r"\(2, 3\).*\(2, 2\)"):
            tn.matmul(T(np.ones((2, 3))), T(np.ones((2, 2))))

    def test_batched_gradient(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=(2, 3, 4)), rng.normal(size=(4, 5))
        ta, tb = T(a), T(b)
        ga, gb = tn.grad((tn.matmul(ta, tb) * tn.matmul(ta, tb)).sum(), [ta, tb])
        f = lambda: float(((a @ b) ** 2).sum())
        fa, fb = central_difference(f, [a, b])
        assert rel_error(ga, fa) < 1e-6 and rel_error(gb, fb) < 1e-6


class TestSoftmax:
    def test_symmetric(self):
        np.testing.assert_allclose(tn.softmax(T([0.0, 0.0])).data, [0.5, 0.5])

    @pytest.mark.parametrize("c", [-50.0, 0.0, 3.7, 800.0])
    def test_shift_invariance(self, c):
        np.testing.assert_allclose(tn.softmax(T([c, c, c])).data, [1 / 3] * 3, rtol=1e-15)

    def test_closed_form(self):
        # exp(ln 2) / (exp(ln 2) + exp(0)) = 2 / 3
        np.testing.assert_allclose(tn.softmax(T([math.log(2), 0.0])).data, [2 / 3, 1 / 3], rtol=1e-15)

    def test_nan_rejected(self):
        with pytest.raises(FloatingPointError):
            tn.softmax(_raw([1.0, float("nan")]))

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, (3, 5), elements=st.floats(-30, 30)))
    def test_rows_are_distributions(self, x):
        p = tn.softmax(T(x)).data
        assert (p >= 0).all()
        np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-6)

    def test_deterministic(self):
        x = np.random.default_rng(1).normal(size=(4, 6))
        assert np.array_equal(tn.softmax(T(x)).data, tn.softmax(T(x)).data)


def _raw(values):
    """A tensor holding values that bypass the constructor's finiteness check."""
    t = Tensor(np.zeros(len(values)))
    t.data = np.asarray(values, dtype=np.float64)
    return t


class TestMaskedCrossEntropy:
    def test_uniform_seven_classes(self):
        loss = tn.masked_cross_entropy(T(np.zeros((1, 7))), [3])
        assert loss.item() == pytest.approx(math.log(7), abs=1e-12)
        assert loss.item() == pytest.approx(1.9459, abs=1e-4)

    def test_large_margin_goes_to_zero(self):
        for margin in (10.0, 30.0, 100.0):
            logits = np.zeros((1, 4))
            logits[0, 2] = margin
            assert tn.masked_cross_entropy(T(logits), [2]).item() < 5 * math.exp(-margin)

    def test_ignored_middle_position(self):
        logits = np.random.default_rng(5).normal(size=(3, 4))
        labels = [1, IGNORE, 3]
        expected = (nll(logits[0].tolist(), 1) + nll(logits[2].tolist(), 3)) / 2
        assert tn.masked_cross_entropy(T(logits), labels).item() == pytest.approx(expected, rel=1e-12)

    def test_ignored_rows_get_zero_gradient(self):
        x = T(np.random.default_rng(5).normal(size=(3, 4)))
        (g,) = tn.grad(tn.masked_cross_entropy(x, [1, IGNORE, 3]), [x])
        assert (g[1] == 0).all() and np.abs(g[0]).sum() > 0

    def test_all_ignored_is_an_error(self):
        with pytest.raises(ValueError):
            tn.masked_cross_entropy(T(np.zeros((2, 3))), [IGNORE, IGNORE])

    def test_label_out_of_range(self):
        with pytest.raises(IndexError):
            tn.masked_cross_entropy(T(np.zeros((2, 3))), [0, 3])

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_perturbing_ignored_labels_is_bit_identical(self, seed):
        rng = np.random.default_rng(seed)
        n, k = 8, 7
        logits = rng.normal(size=(n, k)) * 3
        labels = rng.integers(0, k, size=n)
        active = rng.random(n) < 0.5
        active[0] = True
        masked = np.where(active, labels, IGNORE)
        perturbed = np.where(active, labels, rng.integers(0, k, size=n))

        x1, x2 = T(logits), T(logits.copy())
        l1 = tn.masked_cross_entropy(x1, masked)
        l2 = tn.masked_cross_entropy(x2, perturbed, active=active)
        (g1,), (g2,) = tn.grad(l1, [x1]), tn.grad(l2, [x2])
        assert l1.data.tobytes() == l2.data.tobytes()
        assert g1.tobytes() == g2.tobytes()


class TestBackward:
    def test_constant_function_has_zero_gradient(self):
        x = T([0.3, -1.2, 2.0])
        (g,) = tn.grad(tn.softmax(x).sum(), [x])
        np.testing.assert_allclose(g, 0.0, atol=1e-15)

    def test_quadratic(self):
        x = T([1.0, -2.0])
        (g,) = tn.grad((x * x).sum(), [x])
        np.testing.assert_array_equal(g, [2.0, -4.0])

    def test_two_layer_composition_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        x, w1, b1, w2 = rng.normal(size=(5, 3)), rng.normal(size=(3, 4)), rng.normal(size=4), rng.normal(size=(4, 2))
        params = [T(a) for a in (x, w1, b1, w2)]

        def build(px, pw1, pb1, pw2):
            h = tn.gelu(tn.matmul(px, pw1) + pb1)
            return tn.masked_cross_entropy(tn.matmul(h, pw2), [0, 1, IGNORE, 1, 0])

        analytic = tn.grad(build(*params), params)
        raw = [x, w1, b1, w2]
        numeric = central_difference(lambda: build(*[T(a, grad=False) for a in raw]).item(), raw)
        for a, n in zip(analytic, numeric):
            assert rel_error(a, n) < 1e-4

    def test_non_scalar_loss_rejected(self):
        x = T([1.0, 2.0])
        with pytest.raises(ValueError, match="scalar"):
            (x * 2.0).backward()

    def test_unreachable_leaf_gets_zero(self):
        x, unused = T([1.0, 2.0]), T([[3.0]])
        gx, gu = tn.grad((x * x).sum(), [x, unused])
        assert gu.shape == (1, 1) and (gu == 0).all()

    def test_shared_node_visited_once(self):
        x = T([3.0])
        y = x * x
        (g,) = tn.grad((y + y).sum(), [x])  # d(2x^2)/dx = 4x
        np.testing.assert_allclose(g, [12.0])

    def test_layer_norm_gradient(self):
        rng = np.random.default_rng(2)
        x, s, o = rng.normal(size=(3, 6)), rng.normal(size=6), rng.normal(size=6)
        w = rng.normal(size=(3, 6))
        ps = [T(a) for a in (x, s, o)]
        analytic = tn.grad((tn.layer_norm(*ps) * T(w, grad=False)).sum(), ps)
        f = lambda: float((tn.layer_norm(T(x, 0), T(s, 0), T(o, 0)).data * w).sum())
        for a, n in zip(analytic, central_difference(f, [x, s, o])):
            assert rel_error(a, n) < 1e-6

    @settings(max_examples=25, deadline=None)
    @given(
        arrays(np.float64, (2, 3), elements=st.floats(-10, 10)),
        arrays(np.float64, (3, 3), elements=st.floats(-2, 2)),
    )
    def test_random_graph_matches_finite_differences(self, x, w):
        px, pw = T(x), T(w)

        def f(a, b):
            h = tn.tanh(tn.matmul(a, b) * 0.3)
            # offset keeps the layer-norm row variance away from zero
            spread = h + T([0.0, 3.0, 6.0], 0)
            z = tn.softmax(h) * tn.layer_norm(spread, T(np.ones(3), 0), T(np.zeros(3), 0))
            return (z * z).sum() + tn.gelu(a).mean()

        analytic = tn.grad(f(px, pw), [px, pw])
        numeric = central_difference(lambda: f(T(x, 0), T(w, 0)).item(), [x, w])
        for a, n in zip(analytic, numeric):
            assert rel_error(a, n) < 1e-4

    def test_non_finite_result_is_a_hard_error(self):
        with pytest.raises(tn.NonFiniteError):
            tn.exp(T([1000.0]))

    def test_precision_is_per_tensor(self):
        a32 = Tensor(np.ones((2, 2), dtype=np.float32))
        a64 = Tensor(np.ones((2, 2)))
        assert tn.matmul(a32, a32).dtype == np.float32
        assert tn.matmul(a64, a64).dtype == np.float64


class TestAdam:
    def test_zero_gradient_leaves_params_unchanged(self):
        p = np.array([1.5, -2.0])
        before = p.copy()
        state = AdamState.for_params([p], lr=0.1)
        adam_step([p], [np.zeros(2)], state)
        assert p.tobytes() == before.tobytes()
        assert state.t == 1

    def test_first_step_magnitude_is_lr(self):
        p = np.zeros(3)
        g = np.array([0.5, -3.0, 100.0])
        state = AdamState.for_params([p], lr=0.01)
        adam_step([p], [g], state)
        # m_hat = g, v_hat = g^2  =>  step = lr * g / (|g| + eps)
        np.testing.assert_allclose(p, -0.01 * g / (np.abs(g) + 1e-8), rtol=1e-12)
        np.testing.assert_allclose(np.abs(p), 0.01, rtol=1e-6)

    def test_two_steps_follow_the_recurrence(self):
        p = np.array([0.7])
        state = AdamState.for_params([p], lr=0.05)
        gs = [0.3, -1.1]
        trace = adam_reference(0.7, gs, lr=0.05)
        for g, expected in zip(gs, trace):
            adam_step([p], [np.array([g])], state)
            assert p[0] == pytest.approx(expected, rel=1e-13)
        assert state.t == 2

    def test_accumulators_match_param_shapes(self):
        ps = [np.zeros((2, 3)), np.zeros(4)]
        state = AdamState.for_params(ps)
        assert [m.shape for m in state.m] == [(2, 3), (4,)]
        assert [v.shape for v in state.v] == [(2, 3), (4,)]

    def test_shape_mismatch(self):
        p = np.zeros(3)
        with pytest.raises(tn.DimensionError):
            adam_step([p], [np.zeros(2)], AdamState.for_params([p]))
