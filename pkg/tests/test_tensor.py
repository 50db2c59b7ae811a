"""Tape primitives: forward values, analytic gradients vs finite differences,
accumulation, and the optimizer step."""
from __future__ import annotations

import math

import numpy as np
import pytest

try:
    from hypothesis import given, settings
    from hypothesis import strategies as st
    HAVE_HYPOTHESIS = True
except ImportError:
    HAVE_HYPOTHESIS = False

from seqrisk.tensor import (
    ComputationTape,
    GradCheckReport,
    Tensor,
    active_tape,
    add,
    bce_loss,
    grad_check,
    masked_mean_rows,
    matmul,
    mul,
    relu,
    scale,
    sigmoid,
    slice1d,
    softmax,
    sub,
    sum_all,
    tanh,
)


def _fd(fn, params: dict[str, Tensor], step: float = 1e-6) -> dict[str, np.ndarray]:
    """Central-difference gradient of the scalar fn() for every parameter."""
    grads = {}
    for name, p in params.items():
        flat = p.data.reshape(-1)
        g = np.zeros(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            lp = float(fn().data)
            flat[i] = orig - step
            lm = float(fn().data)
            flat[i] = orig
            g[i] = (lp - lm) / (2 * step)
        grads[name] = g.reshape(p.data.shape)
    return grads


class TestTensorBasics:
    def test_scalar_stays_zero_dim(self):
        t = Tensor(3.5)
        assert t.shape == ()
        assert t.item() == 3.5

    def test_noncontiguous_input_is_made_contiguous(self):
        base = np.arange(12.0).reshape(3, 4)
        t = Tensor(base.T)
        assert t.data.flags["C_CONTIGUOUS"]
        np.testing.assert_array_equal(t.data, base.T)

    def test_data_is_float64(self):
        assert Tensor([1, 2, 3]).data.dtype == np.float64

    def test_no_tape_active_outside_context(self):
        assert active_tape() is None
        with ComputationTape() as tape:
            assert active_tape() is tape
        assert active_tape() is None


class TestForwardValues:
    def test_softmax_known_values(self):
        out = softmax(Tensor([1.0, 2.0, 3.0]))
        np.testing.assert_allclose(
            out.data, [0.09003057, 0.24472847, 0.66524096], atol=1e-8)

    def test_softmax_rows_sum_to_one(self, rng):
        x = Tensor(rng.normal(size=(4, 7)))
        np.testing.assert_allclose(softmax(x, axis=-1).data.sum(axis=-1), 1.0)

    def test_softmax_shift_invariance(self, rng):
        x = rng.normal(size=6)
        np.testing.assert_allclose(
            softmax(Tensor(x)).data, softmax(Tensor(x + 500.0)).data, atol=1e-12)

    def test_sigmoid_symmetry(self):
        assert sigmoid(Tensor(0.0)).item() == 0.5
        np.testing.assert_allclose(
            sigmoid(Tensor(3.0)).item() + sigmoid(Tensor(-3.0)).item(), 1.0)

    def test_sigmoid_extreme_inputs_stay_finite(self):
        for v in (-1000.0, 1000.0):
            out = sigmoid(Tensor(v)).item()
            assert math.isfinite(out)
            assert 0.0 <= out <= 1.0

    def test_matmul_matches_numpy(self, rng):
        a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
        np.testing.assert_allclose(matmul(Tensor(a), Tensor(b)).data, a @ b)

    def test_matvec_and_elementwise(self, rng):
        m, v = rng.normal(size=(3, 3)), rng.normal(size=3)
        np.testing.assert_allclose(matmul(Tensor(m), Tensor(v)).data, m @ v)
        np.testing.assert_allclose(mul(Tensor(v), Tensor(v)).data, v * v)
        np.testing.assert_allclose(sub(Tensor(v), Tensor(v)).data, 0.0)

    def test_masked_mean_rows(self):
        x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0], [100.0, 100.0]]))
        mask = np.array([True, True, False])
        np.testing.assert_allclose(masked_mean_rows(x, mask).data, [2.0, 3.0])

    def test_masked_mean_rejects_empty_mask(self):
        with pytest.raises(ValueError):
            masked_mean_rows(Tensor(np.ones((2, 2))), np.array([False, False]))

    def test_bce_loss_values(self):
        # -log(0.8) for a confident correct positive
        assert bce_loss(Tensor(0.8), 1).item() == pytest.approx(-math.log(0.8))
        assert bce_loss(Tensor(0.8), 0).item() == pytest.approx(-math.log(0.2))

    def test_bce_loss_clamps_saturated_probability(self):
        loss = bce_loss(Tensor(1.0), 0)
        assert math.isfinite(loss.item())

    def test_bce_loss_rejects_bad_label(self):
        with pytest.raises(ValueError):
            bce_loss(Tensor(0.5), 2)

    def test_bce_loss_rejects_vector_risk(self):
        with pytest.raises(ValueError):
            bce_loss(Tensor([0.5]), 1)


class TestGradients:
    def test_chain_scalar_gradient(self):
        x = Tensor(0.3, requires_grad=True)
        with ComputationTape() as tape:
            loss = mul(sigmoid(x), sigmoid(x))
        tape.backward(loss)
        s = 1 / (1 + math.exp(-0.3))
        expected = 2 * s * s * (1 - s)
        np.testing.assert_allclose(x.grad, expected, rtol=1e-12)

    def test_matmul_gradients_match_fd(self, rng):
        a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=(4, 2)), requires_grad=True)

        def loss():
            return sum_all(tanh(matmul(a, b)))

        report = grad_check(loss, {"a": a, "b": b})
        assert report.ok, report.failures()

    def test_softmax_gradient_matches_fd(self, rng):
        x = Tensor(rng.normal(size=5), requires_grad=True)
        w = Tensor(rng.normal(size=5), requires_grad=True)

        def loss():
            return sum_all(mul(softmax(x), w))

        report = grad_check(loss, {"x": x, "w": w})
        assert report.ok, report.failures()

    def test_slice_and_masked_mean_gradients(self, rng):
        x = Tensor(rng.normal(size=6), requires_grad=True)
        m = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        mask = np.array([True, False, True, True])

        def loss():
            a = sum_all(sigmoid(slice1d(x, 1, 4)))
            b = sum_all(masked_mean_rows(m, mask))
            return add(a, b)

        report = grad_check(loss, {"x": x, "m": m})
        assert report.ok, report.failures()

    def test_relu_gradient_away_from_kink(self):
        x = Tensor(np.array([-2.0, -0.5, 0.5, 2.0]), requires_grad=True)
        with ComputationTape() as tape:
            loss = sum_all(relu(x))
        tape.backward(loss)
        np.testing.assert_array_equal(x.grad, [0.0, 0.0, 1.0, 1.0])

    def test_bce_gradient_matches_fd(self):
        z = Tensor(0.4, requires_grad=True)

        def loss():
            return bce_loss(sigmoid(z), 1)

        report = grad_check(loss, {"z": z})
        assert report.ok, report.failures()
        # closed form: d/dz BCE(sigmoid(z), y=1) = sigmoid(z) - 1
        with ComputationTape() as tape:
            l = loss()
        tape.backward(l)
        np.testing.assert_allclose(z.grad, 1 / (1 + math.exp(-0.4)) - 1, rtol=1e-10)

    def test_gradient_accumulates_across_backwards(self):
        x = Tensor(1.5, requires_grad=True)
        for _ in range(3):
            with ComputationTape() as tape:
                loss = scale(2.0, x)
            tape.backward(loss)
        np.testing.assert_allclose(x.grad, 6.0)

    def test_reused_input_accumulates_inside_one_tape(self):
        x = Tensor(0.7, requires_grad=True)
        with ComputationTape() as tape:
            loss = add(mul(x, x), x)  # d/dx = 2x + 1
        tape.backward(loss)
        np.testing.assert_allclose(x.grad, 2 * 0.7 + 1)

    def test_backward_is_bitwise_deterministic(self, rng):
        a_data = rng.normal(size=(5, 5))
        grads = []
        for _ in range(2):
            a = Tensor(a_data.copy(), requires_grad=True)
            with ComputationTape() as tape:
                loss = sum_all(sigmoid(matmul(a, a)))
            tape.backward(loss)
            grads.append(a.grad.copy())
        assert np.array_equal(grads[0], grads[1])

    def test_backward_requires_scalar_loss(self, rng):
        x = Tensor(rng.normal(size=3), requires_grad=True)
        with ComputationTape() as tape:
            out = sigmoid(x)
        with pytest.raises(ValueError):
            tape.backward(out)


class TestSgdStep:
    def test_step_and_grad_reset(self):
        from seqrisk.tensor import sgd_step

        p = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        p.grad = np.array([0.5, -0.5])
        sgd_step([p], lr=0.1)
        np.testing.assert_allclose(p.data, [0.95, 2.05])
        assert p.grad is None

    def test_step_without_gradient_rejected(self):
        from seqrisk.tensor import sgd_step

        p = Tensor(np.array([1.0]), requires_grad=True)
        with pytest.raises(ValueError):
            sgd_step([p], lr=0.1)


class TestGradCheckHarness:
    def test_empty_params_report(self):
        report = grad_check(lambda: Tensor(0.0), {})
        assert report.ok
        assert report.worst == 0.0

    def test_detects_wrong_gradient(self):
        # an op whose backward deliberately lies by a factor of two
        from seqrisk.tensor import _emit

        x = Tensor(1.0, requires_grad=True)

        def bad_double(t):
            return _emit(np.asarray(t.data * 2.0), (t,), lambda g: (2.0 * np.asarray(g) * 2.0,))

        report = grad_check(lambda: bad_double(x), {"x": x})
        assert not report.ok
        assert "x" in report.failures()

    def test_restores_parameter_values(self, rng):
        x = Tensor(rng.normal(size=4), requires_grad=True)
        before = x.data.copy()
        grad_check(lambda: sum_all(tanh(x)), {"x": x})
        np.testing.assert_array_equal(x.data, before)


if HAVE_HYPOTHESIS:

    class TestTensorProperties:
        @given(st.lists(st.floats(-30, 30), min_size=1, max_size=12))
        @settings(max_examples=60, deadline=None)
        def test_softmax_is_distribution(self, xs):
            out = softmax(Tensor(xs)).data
            assert np.all(out >= 0)
            assert abs(out.sum() - 1.0) < 1e-10

        @given(st.floats(-50, 50))
        @settings(max_examples=60, deadline=None)
        def test_sigmoid_tanh_identity(self, v):
            # tanh(x) = 2*sigmoid(2x) - 1
            lhs = tanh(Tensor(v)).item()
            rhs = 2 * sigmoid(Tensor(2 * v)).item() - 1
            assert abs(lhs - rhs) < 1e-12

        @given(st.integers(0, 2**32 - 1))
        @settings(max_examples=20, deadline=None)
        def test_matmul_grad_property(self, seed):
            r = np.random.default_rng(seed)
            a = Tensor(r.normal(size=(2, 3)), requires_grad=True)
            b = Tensor(r.normal(size=3), requires_grad=True)
            report = grad_check(lambda: sum_all(sigmoid(matmul(a, b))),
                                {"a": a, "b": b})
            assert report.ok, report.failures()
