import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shar.numeric import (AdamState, Rng, adam_step, clip_global_norm, grad_check, matmul,
                          sigmoid, softmax_xent, tanh_act)

finite = st.floats(min_value=-700, max_value=700, allow_nan=False)


def triple_loop(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            for k in range(a.shape[1]):
                out[i, j] += a[i, k] * b[k, j]
    return out


class TestMatmul:
    def test_identity(self, rng):
        m = rng.normal(size=(3, 3))
        assert np.array_equal(matmul(np.eye(3), m), m)

    def test_hand_example(self):
        assert matmul([[1, 2], [3, 4]], [[1], [1]]).tolist() == [[3.0], [7.0]]

    def test_matches_triple_loop(self, rng):
        a, b = rng.normal(size=(4, 5)), rng.normal(size=(5, 2))
        np.testing.assert_allclose(matmul(a, b), triple_loop(a, b), rtol=0, atol=1e-12)

    def test_mismatch_names_shapes(self):
        with pytest.raises(ValueError, match=r"\(2, 3\).*\(2, 3\)"):
            matmul(np.zeros((2, 3)), np.zeros((2, 3)))

    def test_associativity(self, rng):
        for _ in range(20):
            a, b, c = rng.normal(size=(3, 4)), rng.normal(size=(4, 5)), rng.normal(size=(5, 2))
            left, right = matmul(matmul(a, b), c), matmul(a, matmul(b, c))
            assert np.max(np.abs(left - right)) <= 1e-9 * max(1.0, np.max(np.abs(left)))


class TestActivations:
    def test_sigmoid_values(self):
        assert sigmoid(0.0) == 0.5
        assert abs(sigmoid(50.0) - 1.0) <= 1e-15
        # 1/(1+e^-1) to 25 digits
        assert sigmoid(1.0) == pytest.approx(0.7310585786300048792511592, abs=1e-16)

    def test_sigmoid_no_overflow(self):
        with np.errstate(over="raise", invalid="raise"):
            out = sigmoid(np.array([-1000.0, 1000.0]))
        assert out[0] == 0.0 and out[1] == 1.0

    @given(finite)
    def test_sigmoid_complement(self, x):
        assert abs(sigmoid(x) + sigmoid(-x) - 1.0) <= 1e-12

    def test_tanh(self):
        assert tanh_act(0.0) == 0.0
        assert tanh_act(0.5) == pytest.approx(0.4621171572600097585023185, abs=1e-16)

    @given(st.floats(min_value=-50, max_value=50))
    def test_tanh_odd(self, x):
        assert tanh_act(-x) == -tanh_act(x)
        assert -1.0 <= tanh_act(x) <= 1.0


class TestSoftmaxXent:
    def test_uniform(self):
        probs, loss, dlogits = softmax_xent(np.zeros(4), 1)
        np.testing.assert_allclose(probs, 0.25, atol=1e-15)
        assert loss == pytest.approx(math.log(4), abs=1e-15)
        np.testing.assert_allclose(dlogits, [0.25, -0.75, 0.25, 0.25], atol=1e-15)

    def test_stable_for_huge_logits(self):
        with np.errstate(over="raise", invalid="raise"):
            probs, loss, _ = softmax_xent(np.array([1000.0, 0.0]), 0)
        assert loss == pytest.approx(0.0, abs=1e-300)
        assert np.all(np.isfinite(probs))

    def test_matches_extended_precision(self):
        # reference computed at 40 significant digits
        probs, loss, dlogits = softmax_xent(np.array([0.3, -1.2, 2.5, 0.0, -0.7]), 2)
        expected = [0.088052652290961289147, 0.019647202407176200208, 0.79467637558690441805,
                    0.06523100919649593126, 0.032392760518462161334]
        np.testing.assert_allclose(probs, expected, rtol=1e-14)
        assert loss == pytest.approx(0.22982032193867031889, rel=1e-14)
        onehot = np.eye(5)[2]
        np.testing.assert_allclose(dlogits, np.array(expected) - onehot, atol=1e-15)

    def test_empty(self):
        with pytest.raises(ValueError):
            softmax_xent(np.array([]), 0)

    @given(st.lists(st.floats(-30, 30), min_size=1, max_size=8), st.floats(-100, 100))
    def test_normalized_and_shift_invariant(self, logits, shift):
        z = np.array(logits)
        p1, _, _ = softmax_xent(z, 0)
        p2, _, _ = softmax_xent(z + shift, 0)
        assert abs(p1.sum() - 1.0) <= 1e-12
        np.testing.assert_allclose(p1, p2, rtol=0, atol=1e-12)


class TestAdam:
    def test_zero_gradient_is_noop(self):
        params = np.array([0.3, -1.7, 2.0])
        state = AdamState.zeros(3)
        out = params
        for _ in range(5):
            out = adam_step(out, np.zeros(3), state, 0.01)
        assert state.t == 5
        assert np.array_equal(out, params)

    def test_first_step_is_sign_step(self):
        state = AdamState.zeros(1)
        out = adam_step(np.array([1.0]), np.array([-3.0]), state, 0.1)
        # at t=1 bias correction gives m_hat = g, v_hat = g^2
        assert out[0] - 1.0 == pytest.approx(0.1 * 3.0 / (3.0 + 1e-8), rel=1e-12)

    def test_three_step_trajectory(self):
        # frozen from a plain-float transcription of the Adam recurrences
        state = AdamState.zeros(2)
        p = np.array([1.0, -2.0])
        for g in ([0.5, -3.0], [0.25, 1.0], [-1.0, 0.0]):
            p = adam_step(p, np.array(g), state, 0.1)
        np.testing.assert_allclose(p, [0.8274177428854115, -1.8290411318785376], rtol=1e-14)
        assert state.t == 3
        assert np.all(state.v >= 0)

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length mismatch"):
            adam_step(np.zeros(2), np.zeros(3), AdamState.zeros(2), 0.1)


def test_clip_global_norm():
    g = np.array([3.0, 4.0])
    np.testing.assert_allclose(clip_global_norm(g, 1.0), [0.6, 0.8])
    assert clip_global_norm(g, 10.0) is g


class TestGradCheck:
    def test_quadratic(self):
        err = grad_check(lambda th: (float(th[0] ** 2), 2 * th), np.array([3.0]), h=1e-5)
        assert err < 1e-8

    def test_linear(self):
        err = grad_check(lambda th: (float(th.sum()), np.ones_like(th)), np.arange(5.0))
        assert err < 1e-9

    def test_detects_wrong_gradient(self):
        err = grad_check(lambda th: (float(th @ th), th), np.array([1.0, 2.0]))
        assert err > 0.4

    def test_non_finite_loss(self):
        with pytest.raises(FloatingPointError):
            grad_check(lambda th: (float("nan"), th), np.ones(2))


class TestRng:
    def test_same_seed_same_stream(self):
        a, b = Rng(42), Rng(42)
        assert np.array_equal(a.next_u64(100), b.next_u64(100))
        assert np.array_equal(a.random(50), b.random(50))

    def test_known_splitmix_outputs(self):
        # published SplitMix64 outputs for seed 0
        r = Rng(0)
        assert [r.next_u64() for _ in range(3)] == [
            0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]

    def test_batched_equals_scalar(self):
        a, b = Rng(9), Rng(9)
        assert a.next_u64(5).tolist() == [b.next_u64() for _ in range(5)]

    def test_ranges(self):
        r = Rng(1)
        u = r.random(10_000)
        assert u.min() >= 0.0 and u.max() < 1.0
        assert abs(u.mean() - 0.5) < 0.02
        assert sorted(r.permutation(10)) == list(range(10))
        assert all(0 <= r.randbelow(7) < 7 for _ in range(200))
