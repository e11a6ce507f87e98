import numpy as np
import pytest

from gridcast import (
    CAEConfig,
    CAEModel,
    ConfigurationError,
    TrainingDivergenceError,
    build_cae,
    decode,
    encode,
    flatten_latent,
    reconstruct,
    reconstruct_with_dropout,
    train_cae,
    unflatten_latent,
)

TINY = dict(input_shape=(8, 8, 1), encoder_filters=(4, 8), epochs=5, batch_size=4, seed=3)


class TestConfig:
    def test_latent_shape_burgers(self):
        cfg = CAEConfig(input_shape=(64, 64, 2), encoder_filters=(16, 32, 64))
        assert cfg.latent_shape == (8, 8, 64)
        assert cfg.decoder_filters == (64, 32, 16)

    def test_latent_shape_wrf(self):
        cfg = CAEConfig(input_shape=(256, 256, 1), encoder_filters=(32, 64, 128),
                        epochs=1000, batch_size=10)
        assert cfg.latent_shape == (32, 32, 128)

    def test_indivisible_dims_rejected(self):
        with pytest.raises(ConfigurationError):
            CAEConfig(input_shape=(60, 64, 2), encoder_filters=(16, 32, 64))

    def test_keep_prob_range(self):
        with pytest.raises(ConfigurationError):
            CAEConfig(input_shape=(8, 8, 1), encoder_filters=(4,), keep_prob=0.0)


class TestEncodeDecode:
    def test_burgers_config_shapes(self):
        cfg = CAEConfig(input_shape=(64, 64, 2), encoder_filters=(16, 32, 64))
        model = build_cae(cfg)
        x = np.random.default_rng(0).random((64, 64, 2))
        lat = encode(model, x)
        assert lat.shape == (8, 8, 64)
        out = decode(model, lat)
        assert out.shape == x.shape

    def test_wrf_config_shapes(self):
        cfg = CAEConfig(input_shape=(256, 256, 1), encoder_filters=(32, 64, 128))
        model = build_cae(cfg)
        x = np.random.default_rng(1).random((256, 256, 1))
        assert encode(model, x).shape == (32, 32, 128)

    def test_zero_weights_give_zero_latent(self):
        cfg = CAEConfig(**TINY)
        model = build_cae(cfg)
        for bank in model.banks():
            bank.weights[:] = 0.0
            bank.biases[:] = 0.0
        lat = encode(model, np.random.default_rng(2).random((8, 8, 1)))
        assert not lat.any()

    def test_zero_everything_sigmoid_decodes_to_half(self):
        cfg = CAEConfig(**TINY)
        model = build_cae(cfg)
        for bank in model.banks():
            bank.weights[:] = 0.0
            bank.biases[:] = 0.0
        out = decode(model, np.zeros(cfg.latent_shape))
        assert np.allclose(out, 0.5)

    def test_roundtrip_shape_batch(self):
        cfg = CAEConfig(**TINY)
        model = build_cae(cfg)
        xb = np.random.default_rng(3).random((6, 8, 8, 1))
        assert reconstruct(model, xb).shape == xb.shape

    def test_shape_mismatch_raises(self):
        model = build_cae(CAEConfig(**TINY))
        with pytest.raises(ConfigurationError):
            encode(model, np.zeros((8, 8, 2)))
        with pytest.raises(ConfigurationError):
            decode(model, np.zeros((4, 4, 4)))

    def test_latent_flatten_row_major(self):
        lat = np.arange(2 * 2 * 3, dtype=float).reshape(2, 2, 3)
        flat = flatten_latent(lat)
        assert np.array_equal(flat, np.arange(12, dtype=float))
        assert np.array_equal(unflatten_latent(flat, (2, 2, 3)), lat)


class TestTraining:
    def test_constant_field_loss_approaches_zero(self):
        vals = np.full((12, 8, 8, 1), 0.35)
        cfg = CAEConfig(input_shape=(8, 8, 1), encoder_filters=(4, 8), epochs=50,
                        batch_size=4, learning_rate=1e-2, seed=1)
        model = train_cae(vals, cfg)
        assert model.loss_history[-1] < 1e-4
        assert model.loss_history[-1] < 0.01 * model.loss_history[0]

    def test_loss_history_length_and_finiteness(self):
        vals = np.random.default_rng(4).random((10, 8, 8, 1))
        model = train_cae(vals, CAEConfig(**TINY))
        assert len(model.loss_history) == 5
        assert np.isfinite(model.loss_history).all()

    def test_training_is_deterministic(self):
        vals = np.random.default_rng(5).random((10, 8, 8, 1))
        m1 = train_cae(vals, CAEConfig(**TINY))
        m2 = train_cae(vals, CAEConfig(**TINY))
        for a, b in zip(m1.params(), m2.params()):
            assert np.array_equal(a, b)
        assert m1.loss_history == m2.loss_history

    def test_different_seeds_differ(self):
        vals = np.random.default_rng(6).random((10, 8, 8, 1))
        m1 = train_cae(vals, CAEConfig(**TINY))
        m2 = train_cae(vals, CAEConfig(**{**TINY, "seed": 4}))
        assert not np.array_equal(m1.encoder[0].weights, m2.encoder[0].weights)

    def test_divergence_raises_with_epoch(self):
        vals = np.random.default_rng(0).random((8, 8, 8, 1))
        cfg = CAEConfig(input_shape=(8, 8, 1), encoder_filters=(4,), epochs=3, batch_size=4,
                        learning_rate=1e100, final_activation="identity", seed=0)
        with pytest.raises(TrainingDivergenceError) as err:
            train_cae(vals, cfg)
        assert err.value.epoch == 0

    def test_short_final_batch_is_used(self):
        # 10 frames, batch 4 -> batches of 4, 4, 2; must not raise and must train
        vals = np.random.default_rng(7).random((10, 8, 8, 1))
        model = train_cae(vals, CAEConfig(**{**TINY, "batch_size": 4, "epochs": 2}))
        assert len(model.loss_history) == 2

    def test_too_few_frames_raises(self):
        with pytest.raises(ConfigurationError):
            train_cae(np.zeros((1, 8, 8, 1)), CAEConfig(**{**TINY, "batch_size": 2}))


class TestDropout:
    def test_keep_one_equals_deterministic(self):
        model = build_cae(CAEConfig(**TINY))
        x = np.random.default_rng(8).random((8, 8, 1))
        base = reconstruct(model, x)
        samples = reconstruct_with_dropout(model, x, 1.0, 3, seed=0)
        for s in samples:
            assert np.array_equal(s, base)

    def test_mask_density_matches_keep_prob(self):
        # pooled over >= 1e5 parameter draws, within 3 binomial standard deviations
        cfg = CAEConfig(input_shape=(16, 16, 2), encoder_filters=(8, 16), seed=0)
        model = build_cae(cfg)
        keep = 0.21
        n_params = sum(p.size for p in model.params())
        n_samples = max(1, int(np.ceil(1e5 / n_params)))
        rng_seeds = np.random.SeedSequence(42).spawn(n_samples)
        from gridcast.cae import mask_banks

        kept = 0
        total = 0
        for child in rng_seeds:
            rng = np.random.default_rng(child)
            masked = mask_banks(model.banks(), keep, rng)
            for orig, m in zip(model.banks(), masked):
                kept += np.count_nonzero(m.weights) + np.count_nonzero(m.biases)
                total += m.weights.size + m.biases.size
        assert total >= 1e5
        sd = np.sqrt(keep * (1 - keep) / total)
        assert abs(kept / total - keep) <= 3 * sd

    def test_dropout_seeded_determinism(self):
        model = build_cae(CAEConfig(**TINY))
        x = np.random.default_rng(9).random((8, 8, 1))
        a = reconstruct_with_dropout(model, x, 0.5, 4, seed=7)
        b = reconstruct_with_dropout(model, x, 0.5, 4, seed=7)
        for s, t in zip(a, b):
            assert np.array_equal(s, t)
        c = reconstruct_with_dropout(model, x, 0.5, 4, seed=8)
        assert not np.array_equal(a[0], c[0])

    def test_invalid_keep_prob_raises(self):
        model = build_cae(CAEConfig(**TINY))
        with pytest.raises(ConfigurationError):
            reconstruct_with_dropout(model, np.zeros((8, 8, 1)), 0.0, 1)


class TestSerialization:
    def test_round_trip_is_bit_exact(self):
        vals = np.random.default_rng(10).random((10, 8, 8, 1))
        model = train_cae(vals, CAEConfig(**TINY))
        blob = model.to_bytes()
        loaded = CAEModel.from_bytes(blob)
        assert loaded.to_bytes() == blob
        for a, b in zip(model.params(), loaded.params()):
            assert np.array_equal(a, b)
        assert loaded.loss_history == model.loss_history

    def test_loaded_model_reconstructs_identically(self, tmp_path):
        vals = np.random.default_rng(11).random((10, 8, 8, 1))
        model = train_cae(vals, CAEConfig(**TINY))
        path = tmp_path / "model.cae"
        model.save(path)
        loaded = CAEModel.load(path)
        x = vals[0]
        assert np.array_equal(reconstruct(model, x), reconstruct(loaded, x))
