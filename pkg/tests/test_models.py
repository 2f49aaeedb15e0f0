import numpy as np
import pytest

from cwpower import autograd as ag
from cwpower import models
from cwpower.dataset import load_checkpoint, save_checkpoint
from cwpower.models import ModelSpec, build_model, count_parameters, predict_gain
from cwpower.signals import Burst, synthesize_cw
from conftest import finite_difference_check, ref_forward


class TestModelSpec:
    def test_variants(self):
        dc = ModelSpec.for_variant("dc_cnn")
        sine = ModelSpec.for_variant("sine_cnn")
        assert dc.probe_offset_hz == 0.0
        assert sine.probe_offset_hz == 200e3

    def test_unknown_variant_rejected(self):
        with pytest.raises(ValueError):
            ModelSpec(variant="lstm")

    def test_even_kernel_rejected(self):
        with pytest.raises(ValueError):
            ModelSpec(kernels=(8, 7, 5))

    def test_embedding_must_match_last_conv(self):
        with pytest.raises(ValueError):
            ModelSpec(embedding_dim=32)

    def test_receptive_field(self):
        assert ModelSpec.for_variant("dc_cnn").receptive_field() == 19


class TestParameterAudit:
    @pytest.mark.parametrize("variant", models.VARIANTS)
    def test_total_is_16370(self, variant):
        weights = build_model(ModelSpec.for_variant(variant), init_seed=0)
        assert count_parameters(weights) == 16370

    def test_per_layer_counts(self):
        weights = build_model(ModelSpec.for_variant("dc_cnn"), init_seed=0)
        counts = dict(models.layer_parameter_counts(weights))
        assert counts == {"conv1": 304, "conv2": 3616, "conv3": 10304, "fc1": 2080, "fc2": 66}

    def test_empty_weights_count_zero(self):
        weights = build_model(ModelSpec.for_variant("dc_cnn"), init_seed=0)
        weights.params = {}
        assert count_parameters(weights) == 0


class TestBuildModel:
    def test_deterministic_per_seed(self):
        a = build_model(ModelSpec.for_variant("dc_cnn"), init_seed=5)
        b = build_model(ModelSpec.for_variant("dc_cnn"), init_seed=5)
        for name in a.params:
            np.testing.assert_array_equal(a.params[name].values, b.params[name].values)
        c = build_model(ModelSpec.for_variant("dc_cnn"), init_seed=6)
        assert any(
            not np.array_equal(a.params[n].values, c.params[n].values) for n in a.params
        )

    def test_zero_burst_follows_bias_path(self):
        weights = build_model(ModelSpec.for_variant("dc_cnn"), init_seed=2)
        x = np.zeros((2, 1000), dtype=np.float32)
        with ag.no_grad():
            out = weights.forward(ag.Tensor(x)).values
        assert np.all(np.isfinite(out))
        np.testing.assert_allclose(out, ref_forward(weights.params, x), rtol=1e-5, atol=1e-6)

    def test_forward_matches_reference(self):
        weights = build_model(ModelSpec.for_variant("dc_cnn"), init_seed=3, dtype=np.float64)
        gen = np.random.default_rng(0)
        x = gen.standard_normal((2, 1000))
        with ag.no_grad():
            out = weights.forward(ag.Tensor(x)).values
        np.testing.assert_allclose(out, ref_forward(weights.params, x), rtol=1e-10)

    def test_activation_time_lengths(self):
        weights = build_model(ModelSpec.for_variant("dc_cnn"), init_seed=0)
        x = ag.Tensor(np.random.default_rng(1).standard_normal((2, 1000)).astype(np.float32))
        with ag.no_grad():
            features = weights.conv_features(x)
            pooled = ag.adaptive_avg_pool(features, 1)
        assert features.values.shape == (64, 1000)
        assert pooled.values.shape == (64, 1)


class TestReceptiveField:
    def test_perturbation_radius(self):
        weights = build_model(ModelSpec.for_variant("dc_cnn"), init_seed=4, dtype=np.float64)
        gen = np.random.default_rng(2)
        x = gen.standard_normal((2, 200))
        center = 100

        def center_activation(arr):
            with ag.no_grad():
                return weights.conv_features(ag.Tensor(arr)).values[:, center].copy()

        base = center_activation(x)
        for distance, expect_change in ((10, False), (9, True)):
            bumped = x.copy()
            bumped[:, center + distance] += 10.0
            changed = not np.allclose(center_activation(bumped), base, atol=0.0)
            assert changed == expect_change
            bumped = x.copy()
            bumped[:, center - distance] += 10.0
            changed = not np.allclose(center_activation(bumped), base, atol=0.0)
            assert changed == expect_change


class TestPredictGain:
    def test_wrong_length_rejected(self):
        weights = build_model(ModelSpec.for_variant("dc_cnn"), init_seed=0)
        with pytest.raises(ValueError):
            predict_gain(weights, synthesize_cw(1.0, 0.0, 0.0, 999))

    def test_deterministic(self):
        weights = build_model(ModelSpec.for_variant("dc_cnn"), init_seed=0)
        burst = synthesize_cw(10 ** (-40 / 20), 0.0, 0.3, 1000)
        a = predict_gain(weights, burst)
        b = predict_gain(weights, burst)
        assert a.gain == b.gain and a.power_dbm == b.power_dbm

    def test_batch_matches_single(self):
        weights = build_model(ModelSpec.for_variant("dc_cnn"), init_seed=1)
        bursts = [synthesize_cw(10 ** (-40 / 20), 0.0, phi, 1000) for phi in (0.1, 1.2, 2.3)]
        singles = [predict_gain(weights, b) for b in bursts]
        batched = models.predict_gain_batch(weights, bursts)
        for s, b in zip(singles, batched):
            assert b.gain == pytest.approx(s.gain, rel=1e-5)

    def test_input_scaling_inverted_at_output(self):
        # identical nets with different scale constants agree after inversion
        burst = synthesize_cw(10 ** (-35 / 20), 0.0, 0.7, 1000)
        est = predict_gain(build_model(ModelSpec.for_variant("dc_cnn"), 0), burst)
        assert np.isfinite(est.power_dbm)
        assert abs(est.gain) ** 2 == pytest.approx(est.power_mw, rel=1e-12)


class TestCheckpointRoundTrip:
    def test_bit_exact(self, tmp_path):
        weights = build_model(ModelSpec.for_variant("sine_cnn"), init_seed=11)
        weights.epoch = 17
        weights.train_seed = 3
        weights.train_loss = [3.0, 2.0, 1.5]
        weights.val_loss = [3.5, 2.5, 1.9]
        path = tmp_path / "model.ckpt"
        save_checkpoint(weights, path)
        loaded = load_checkpoint(path)
        assert loaded.spec == weights.spec
        assert loaded.epoch == 17 and loaded.train_seed == 3
        assert loaded.train_loss == weights.train_loss
        assert list(loaded.params) == list(weights.params)
        for name in weights.params:
            np.testing.assert_array_equal(loaded.params[name].values, weights.params[name].values)

    def test_save_load_save_identical_bytes(self, tmp_path):
        weights = build_model(ModelSpec.for_variant("dc_cnn"), init_seed=8)
        first, second = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(weights, first)
        save_checkpoint(load_checkpoint(first), second)
        assert first.read_bytes() == second.read_bytes()


class TestEndToEndJacobian:
    def test_float64_model_gradients(self, rng):
        spec = ModelSpec(
            variant="dc_cnn", conv_channels=(3, 4, 5), kernels=(5, 3, 3),
            embedding_dim=5, mlp_hidden=4,
        )
        model = build_model(spec, init_seed=1, dtype=np.float64)
        x = rng.standard_normal((2, 2, 24))
        y = rng.uniform(-5, 5, 2)
        build = lambda: ag.mse_db_loss(model.forward(ag.Tensor(x)), y)
        assert finite_difference_check(build, model.parameters()) < 1e-6

    def test_float32_spot_check(self, rng):
        # Gradients computed by the 32-bit build, checked against a float64
        # finite-difference oracle of the same weights; float32 forward
        # quantization makes a direct 32-bit difference quotient meaningless.
        spec = ModelSpec.for_variant("dc_cnn")
        model32 = build_model(spec, init_seed=5)
        model64 = build_model(spec, init_seed=5, dtype=np.float64)
        for name in model32.params:
            model64.params[name].values = model32.params[name].values.astype(np.float64)
        burst = synthesize_cw(10 ** (-35.0 / 20.0), 0.0, 0.6, 1000)
        x32 = models.burst_to_input(burst, spec)
        x64 = x32.astype(np.float64)

        out = model32.forward(ag.Tensor(x32))
        for p in model32.parameters():
            p.zero_grad()
        out.backward(np.array([1.0, 0.0], dtype=np.float32))

        names = list(model32.params)
        checked = 0
        worst = 0.0
        while checked < 100:
            name = names[int(rng.integers(len(names)))]
            grad32 = model32.params[name].grad
            tensor64 = model64.params[name].values
            idx = int(rng.integers(tensor64.size))
            grad = float(grad32.reshape(-1)[idx])
            flat = tensor64.reshape(-1)
            orig = flat[idx]
            h = 1e-6 * max(1.0, abs(orig))
            flat[idx] = orig + h
            with ag.no_grad():
                up = float(model64.forward(ag.Tensor(x64)).values[0])
            flat[idx] = orig - h
            with ag.no_grad():
                down = float(model64.forward(ag.Tensor(x64)).values[0])
            flat[idx] = orig
            fd = (up - down) / (2.0 * h)
            denom = abs(fd) + abs(grad)
            if denom < 1e-6:
                continue
            worst = max(worst, abs(fd - grad) / denom)
            checked += 1
        assert worst < 1e-3
