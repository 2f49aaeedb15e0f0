import math

import numpy as np
import pytest

from cwpower import autograd as ag
from conftest import finite_difference_check, projection_loss, ref_conv1d


def _t(values, grad=True):
    return ag.Tensor(np.asarray(values, dtype=np.float64), requires_grad=grad)


class TestConv1d:
    def test_identity_kernel(self):
        x = _t(np.random.default_rng(0).standard_normal((3, 11)))
        w = ag.Tensor(np.eye(3, dtype=np.float64).reshape(3, 3, 1), requires_grad=True)
        b = _t(np.zeros(3))
        out = ag.conv1d(x, w, b, padding=0)
        np.testing.assert_allclose(out.values, x.values, atol=1e-15)

    def test_hand_convolution(self):
        x = _t([[1.0, 2.0, 3.0, 4.0]])
        w = _t(np.ones((1, 1, 3)) / 3.0)
        b = _t([0.0])
        out = ag.conv1d(x, w, b, padding=1)
        np.testing.assert_allclose(out.values, [[1.0, 2.0, 3.0, 7.0 / 3.0]], atol=1e-15)

    @pytest.mark.parametrize("k", [1, 3, 5, 7, 9])
    def test_time_length_preserved(self, k):
        gen = np.random.default_rng(k)
        x = _t(gen.standard_normal((4, 2, 33)))
        w = _t(gen.standard_normal((5, 2, k)))
        b = _t(gen.standard_normal(5))
        out = ag.conv1d(x, w, b, padding=(k - 1) // 2)
        assert out.values.shape == (4, 5, 33)

    def test_matches_reference(self):
        gen = np.random.default_rng(7)
        x = gen.standard_normal((3, 20))
        w = gen.standard_normal((4, 3, 5))
        b = gen.standard_normal(4)
        out = ag.conv1d(_t(x), _t(w), _t(b), padding=2)
        np.testing.assert_allclose(out.values, ref_conv1d(x, w, b), atol=1e-12)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            ag.conv1d(_t(np.ones((2, 8))), _t(np.ones((3, 4, 3))), _t(np.zeros(3)), padding=1)
        with pytest.raises(ValueError):
            ag.conv1d(_t(np.ones((2, 8))), _t(np.ones((3, 2, 4))), _t(np.zeros(3)), padding=1)
        with pytest.raises(ValueError):
            ag.conv1d(_t(np.ones((2, 8))), _t(np.ones((3, 2, 3))), _t(np.zeros(3)), padding=2)

    def test_zero_upstream_gradient(self):
        gen = np.random.default_rng(1)
        x, w, b = _t(gen.standard_normal((2, 9))), _t(gen.standard_normal((3, 2, 3))), _t(gen.standard_normal(3))
        out = ag.conv1d(x, w, b, padding=1)
        out.backward(np.zeros_like(out.values))
        assert np.all(x.grad == 0) and np.all(w.grad == 0) and np.all(b.grad == 0)

    def test_backward_linear_in_seed(self):
        gen = np.random.default_rng(2)
        x = gen.standard_normal((2, 9))
        w = gen.standard_normal((3, 2, 3))
        seed = gen.standard_normal((3, 9))
        grads = []
        for scale in (1.0, 3.5):
            xt, wt, bt = _t(x), _t(w), _t(np.zeros(3))
            out = ag.conv1d(xt, wt, bt, padding=1)
            out.backward(scale * seed)
            grads.append((xt.grad.copy(), wt.grad.copy()))
        np.testing.assert_allclose(3.5 * grads[0][0], grads[1][0], rtol=1e-12)
        np.testing.assert_allclose(3.5 * grads[0][1], grads[1][1], rtol=1e-12)


class TestRelu:
    def test_values(self):
        out = ag.relu(_t([-1.0, 0.0, 2.0]))
        np.testing.assert_array_equal(out.values, [0.0, 0.0, 2.0])

    def test_gradient_mask(self):
        x = _t([-1.0, 0.0, 2.0])
        out = ag.relu(x)
        out.backward(np.ones(3))
        np.testing.assert_array_equal(x.grad, [0.0, 0.0, 1.0])


class TestAdaptiveAvgPool:
    def test_global_mean(self):
        gen = np.random.default_rng(3)
        x = gen.standard_normal((4, 100))
        out = ag.adaptive_avg_pool(_t(x), 1)
        np.testing.assert_allclose(out.values[:, 0], x.mean(axis=1), atol=1e-12)

    def test_hand_bins(self):
        out = ag.adaptive_avg_pool(_t([[1.0, 2.0, 3.0, 4.0]]), 2)
        np.testing.assert_allclose(out.values, [[1.5, 3.5]], atol=1e-15)

    def test_too_many_bins_rejected(self):
        with pytest.raises(ValueError):
            ag.adaptive_avg_pool(_t(np.ones((1, 3))), 4)

    def test_backward_distributes_evenly(self):
        x = _t(np.arange(8.0)[None, :])
        out = ag.adaptive_avg_pool(x, 2)
        out.backward(np.array([[1.0, 3.0]]))
        np.testing.assert_allclose(x.grad, [[0.25, 0.25, 0.25, 0.25, 0.75, 0.75, 0.75, 0.75]])


class TestLinear:
    def test_identity(self):
        x = _t([1.0, -2.0, 0.5])
        out = ag.linear(x, _t(np.eye(3)), _t(np.zeros(3)))
        np.testing.assert_allclose(out.values, x.values)

    def test_hand_values(self):
        out = ag.linear(_t([1.0, 1.0]), _t([[1.0, 2.0], [3.0, 4.0]]), _t([0.0, 0.0]))
        np.testing.assert_allclose(out.values, [3.0, 7.0])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            ag.linear(_t([1.0, 2.0, 3.0]), _t(np.ones((2, 2))), _t(np.zeros(2)))


class TestPowerDb:
    def test_unit_power(self):
        out = ag.power_db(_t(1.0), _t(0.0))
        assert float(out.values) == 0.0

    def test_weak_tone(self):
        out = ag.power_db(_t(0.0), _t(10 ** (-67.5 / 20)))
        assert float(out.values) == pytest.approx(-67.5, abs=1e-12)

    def test_clamp_floor_and_zero_gradient(self):
        re, im = _t(0.0), _t(0.0)
        out = ag.power_db(re, im)
        assert float(out.values) == pytest.approx(-120.0)
        out.backward(np.asarray(1.0))
        assert float(re.grad) == 0.0 and float(im.grad) == 0.0


class TestMseDbLoss:
    def test_zero_when_exact(self):
        pred = _t([[1.0, 0.0], [0.0, 2.0]])
        loss = ag.mse_db_loss(pred, [0.0, 10 * math.log10(4.0)])
        assert float(loss.values) == pytest.approx(0.0, abs=1e-12)

    def test_double_power_item(self):
        loss = ag.mse_db_loss(_t([[math.sqrt(2.0), 0.0]]), [0.0])
        assert float(loss.values) == pytest.approx((10 * math.log10(2.0)) ** 2, rel=1e-12)

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            ag.mse_db_loss(_t(np.zeros((0, 2))), [])

    def test_batch_mismatch_rejected(self):
        with pytest.raises(ValueError):
            ag.mse_db_loss(_t(np.zeros((2, 2))), [1.0])

    def test_nonnegative_and_zero_iff_match(self):
        gen = np.random.default_rng(11)
        for _ in range(20):
            pred = gen.standard_normal((5, 2)) * 3
            powers = 10 * np.log10(np.sum(pred**2, axis=1))
            assert float(ag.mse_db_loss(_t(pred), powers).values) == pytest.approx(0.0, abs=1e-12)
            jittered = powers + gen.uniform(0.1, 1.0, size=5)
            assert float(ag.mse_db_loss(_t(pred), jittered).values) > 0.0


class TestGradientChecks:
    """Central finite differences over random small shapes, 64-bit."""

    def test_conv1d(self, rng):
        for _ in range(5):
            c_in, c_out = int(rng.integers(1, 4)), int(rng.integers(1, 4))
            t, k = int(rng.integers(4, 12)), int(rng.choice([1, 3, 5]))
            x = _t(rng.standard_normal((c_in, t)))
            w = _t(rng.standard_normal((c_out, c_in, k)))
            b = _t(rng.standard_normal(c_out))
            direction = rng.standard_normal((c_out, t))
            build = lambda: projection_loss(ag.conv1d(x, w, b, padding=(k - 1) // 2), direction)
            assert finite_difference_check(build, [x, w, b]) < 1e-6

    def test_relu(self, rng):
        for _ in range(3):
            vals = rng.standard_normal(12)
            vals[np.abs(vals) < 0.1] += 0.2  # keep clear of the kink
            x = _t(vals)
            direction = rng.standard_normal(12)
            build = lambda: projection_loss(ag.relu(x), direction)
            assert finite_difference_check(build, [x]) < 1e-6

    def test_adaptive_avg_pool(self, rng):
        for out_t in (1, 2, 3, 5):
            x = _t(rng.standard_normal((2, 11)))
            direction = rng.standard_normal((2, out_t))
            build = lambda: projection_loss(ag.adaptive_avg_pool(x, out_t), direction)
            assert finite_difference_check(build, [x]) < 1e-6

    def test_linear(self, rng):
        for _ in range(5):
            f_in, f_out = int(rng.integers(1, 6)), int(rng.integers(1, 6))
            x = _t(rng.standard_normal(f_in))
            w = _t(rng.standard_normal((f_out, f_in)))
            b = _t(rng.standard_normal(f_out))
            direction = rng.standard_normal(f_out)
            build = lambda: projection_loss(ag.linear(x, w, b), direction)
            assert finite_difference_check(build, [x, w, b]) < 1e-6

    def test_power_db(self, rng):
        for _ in range(5):
            re = _t(rng.uniform(0.2, 2.0, 6) * rng.choice([-1, 1], 6))
            im = _t(rng.uniform(0.2, 2.0, 6) * rng.choice([-1, 1], 6))
            direction = rng.standard_normal(6)
            build = lambda: projection_loss(ag.power_db(re, im), direction)
            assert finite_difference_check(build, [re, im]) < 1e-6

    def test_mse_db_loss_end_to_end(self, rng):
        pred = _t(rng.uniform(0.3, 2.0, (4, 2)) * rng.choice([-1, 1], (4, 2)))
        targets = rng.uniform(-5, 5, 4)
        build = lambda: ag.mse_db_loss(pred, targets)
        assert finite_difference_check(build, [pred]) < 1e-6


class TestAdamW:
    def test_zero_grad_zero_decay_identity(self):
        p = _t(np.array([1.0, -2.0]))
        opt = ag.AdamW([p], weight_decay=0.0)
        p.grad = np.zeros(2)
        opt.step()
        np.testing.assert_array_equal(p.values, [1.0, -2.0])

    def test_single_scalar_reference_step(self):
        p = _t(np.array(1.0))
        opt = ag.AdamW([p], lr=2e-4, weight_decay=0.0)
        p.grad = np.asarray(1.0)
        opt.step()
        # bias-corrected m_hat = 1, v_hat = 1 at step 1
        expected = 1.0 - 2e-4 / (1.0 + 1e-8)
        assert float(p.values) == pytest.approx(expected, abs=1e-15)

    def test_decoupled_weight_decay(self):
        p = _t(np.array(4.0))
        opt = ag.AdamW([p], lr=0.1, weight_decay=0.5)
        p.grad = np.asarray(0.0)
        opt.step()
        assert float(p.values) == pytest.approx(4.0 * (1 - 0.1 * 0.5))

    def test_deterministic_trajectories(self):
        def run():
            gen = np.random.default_rng(9)
            p = _t(gen.standard_normal(5))
            opt = ag.AdamW([p])
            for _ in range(25):
                p.grad = gen.standard_normal(5)
                opt.step()
            return p.values.copy()

        np.testing.assert_array_equal(run(), run())

    def test_nan_gradient_raises(self):
        p = _t(np.array([1.0]))
        opt = ag.AdamW([p])
        p.grad = np.array([np.nan])
        with pytest.raises(ag.TrainingError):
            opt.step()


class TestNoGrad:
    def test_inference_builds_no_graph(self):
        x = _t(np.ones(4))
        with ag.no_grad():
            out = ag.relu(x)
        assert out._backward is None and not out.requires_grad

    def test_nested_restores(self):
        with ag.no_grad():
            with ag.no_grad():
                pass
            assert not ag._grad_enabled
        assert ag._grad_enabled
