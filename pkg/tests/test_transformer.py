import numpy as np
import pytest

from adeqvaet.diffcore import grad_check
from adeqvaet.errors import LengthMismatch
from adeqvaet.seeding import derive_seed
from adeqvaet.transformer import (
    TransformerConfig,
    TransformerModel,
    _forward_nodes,
    attention_probs,
    embed_tokens,
    encoder_block,
    load_classifier,
    predict,
    predict_proba,
    save_classifier,
    self_attention,
    train_classifier,
)


def small_model(latent_dim=4, seed=0, **cfg_kw):
    cfg = TransformerConfig(**({"d_model": 8, "n_heads": 2, "n_layers": 1, "ff_hidden": 12} | cfg_kw))
    return TransformerModel.create(cfg, latent_dim=latent_dim, seed=seed)


class TestConfig:
    def test_head_divisibility(self):
        with pytest.raises(ValueError):
            TransformerConfig(d_model=10, n_heads=3)

    def test_layers_positive(self):
        with pytest.raises(ValueError):
            TransformerConfig(n_layers=0)


class TestEmbedTokens:
    def test_zero_latent_is_bias_plus_position(self):
        model = small_model()
        tokens = embed_tokens(model, np.zeros(4))
        expected = model.params.get("emb.b") + model.params.get("emb.pos")
        assert np.allclose(tokens, expected, atol=1e-15)

    def test_equal_values_zero_pos_give_equal_tokens(self):
        model = small_model()
        model.params.get("emb.pos")[:] = 0.0
        tokens = embed_tokens(model, np.full(4, 0.37))
        assert np.abs(tokens - tokens[0]).max() < 1e-15

    def test_shape_contract(self):
        for latent_dim in (1, 3, 9):
            model = small_model(latent_dim=latent_dim)
            assert embed_tokens(model, np.ones(latent_dim)).shape == (latent_dim, 8)


class TestSelfAttention:
    def heads(self, seed=0, d=8, dh=4, n=2):
        rng = np.random.default_rng(seed)
        return [
            tuple(rng.normal(size=shape) for shape in ((d, dh), (d, dh), (d, dh), (dh, d)))
            for _ in range(n)
        ]

    def test_single_token_passthrough(self):
        heads = self.heads()
        seq = np.random.default_rng(1).normal(size=(1, 8))
        out, probs = self_attention(seq, heads, return_probs=True)
        expected = sum(seq @ wv @ wo for _, _, wv, wo in heads)
        assert np.allclose(out, expected, atol=1e-12)
        assert all(np.allclose(p, [[1.0]]) for p in probs)

    def test_rows_stochastic(self):
        rng = np.random.default_rng(2)
        _, probs = self_attention(rng.normal(size=(5, 8)), self.heads(), return_probs=True)
        for p in probs:
            assert np.abs(p.sum(axis=1) - 1.0).max() < 1e-12

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(3)
        seq = rng.normal(size=(6, 8))
        perm = rng.permutation(6)
        heads = self.heads()
        out = self_attention(seq, heads)
        out_perm = self_attention(seq[perm], heads)
        assert np.abs(out[perm] - out_perm).max() < 1e-12


class TestEncoderBlock:
    def test_zero_weights_residual_identity(self):
        model = small_model()
        for name in model.params.names():
            if name.startswith("blk0."):
                model.params.get(name)[:] = 0.0
        seq = np.random.default_rng(4).normal(size=(4, 8))
        assert np.array_equal(encoder_block(model, seq, 0), seq)

    def test_shape_preserved(self):
        model = small_model()
        for tokens in (1, 4, 7):
            seq = np.random.default_rng(5).normal(size=(tokens, 8))
            assert encoder_block(model, seq, 0).shape == seq.shape

    def test_block_grad_check(self):
        model = small_model(latent_dim=3, seed=6)
        rng = np.random.default_rng(7)
        z = rng.normal(size=(2, 3))
        y = rng.integers(0, 2, size=(2, 1)).astype(float)

        def build(g, store):
            prob, _ = _forward_nodes(g, model, z)
            return g.binary_cross_entropy(prob, g.input(y))

        assert model.params.n_parameters() <= 2000
        assert grad_check(build, model.params, eps=1e-5) < 1e-4


class TestPredict:
    def test_zero_head_gives_half_and_tie_label_one(self):
        model = small_model()
        model.params.get("head.w")[:] = 0.0
        model.params.get("head.b")[:] = 0.0
        pred = predict(model, np.random.default_rng(8).normal(size=4))
        assert pred.probability == 0.5
        assert pred.label == 1

    def test_probability_in_open_interval(self):
        model = small_model(seed=9)
        rng = np.random.default_rng(9)
        for _ in range(10):
            p = predict(model, rng.normal(size=4)).probability
            assert 0.0 < p < 1.0

    def test_bias_monotonicity(self):
        model = small_model(seed=10)
        z = np.random.default_rng(10).normal(size=4)
        p0 = predict(model, z).probability
        model.params.get("head.b")[:] += 1.0
        assert predict(model, z).probability > p0

    def test_permutation_invariance_with_zero_pos(self):
        model = small_model(latent_dim=6, seed=11)
        model.params.get("emb.pos")[:] = 0.0
        rng = np.random.default_rng(11)
        z = rng.normal(size=6)
        p_base = predict(model, z).probability
        for _ in range(5):
            perm = rng.permutation(6)
            assert abs(predict(model, z[perm]).probability - p_base) < 1e-12

    def test_attention_probs_row_stochastic(self):
        model = small_model(latent_dim=5, seed=12, n_layers=2)
        maps = attention_probs(model, np.random.default_rng(12).normal(size=5))
        assert len(maps) == 2 * 2  # layers x heads
        for m in maps:
            assert m.shape == (5, 5)
            assert np.abs(m.sum(axis=1) - 1.0).max() < 1e-12


class TestTrainClassifier:
    def test_zero_lr_keeps_model(self):
        rng = np.random.default_rng(13)
        lat = rng.normal(size=(20, 4))
        labels = rng.integers(0, 2, 20)
        model, curve = train_classifier(
            lat, labels, TransformerConfig(d_model=8, n_heads=2, n_layers=1, ff_hidden=12),
            lr=0.0, weight_decay=0.0, epochs=2, batch_size=8, seed=14,
        )
        fresh = TransformerModel.create(model.cfg, 4, seed=derive_seed(14, "init"))
        for name in model.params.names():
            assert np.array_equal(model.params.get(name), fresh.params.get(name))
        assert len(curve) == 2

    def test_separable_latents_reach_full_accuracy(self):
        rng = np.random.default_rng(15)
        n = 60
        labels = np.array([0, 1] * (n // 2))
        lat = rng.normal(scale=0.3, size=(n, 2)) + np.column_stack([2.0 * labels - 1.0, np.zeros(n)])
        model, _ = train_classifier(
            lat, labels, TransformerConfig(d_model=8, n_heads=2, n_layers=1, ff_hidden=12),
            lr=0.01, weight_decay=0.0, epochs=500, batch_size=16, seed=16,
        )
        preds = (predict_proba(model, lat) >= 0.5).astype(int)
        assert (preds == labels).mean() == 1.0

    def test_deterministic_curves(self):
        rng = np.random.default_rng(17)
        lat = rng.normal(size=(30, 3))
        labels = rng.integers(0, 2, 30)
        cfg = TransformerConfig(d_model=8, n_heads=2, n_layers=1, ff_hidden=12)
        _, c1 = train_classifier(lat, labels, cfg, lr=0.01, weight_decay=1e-5, epochs=4, batch_size=8, seed=18)
        _, c2 = train_classifier(lat, labels, cfg, lr=0.01, weight_decay=1e-5, epochs=4, batch_size=8, seed=18)
        assert c1 == c2

    def test_checkpoint_callback_fires(self):
        rng = np.random.default_rng(19)
        lat = rng.normal(size=(16, 3))
        labels = rng.integers(0, 2, 16)
        seen = []
        train_classifier(
            lat, labels, TransformerConfig(d_model=8, n_heads=2, n_layers=1, ff_hidden=12),
            lr=0.01, weight_decay=0.0, epochs=5, batch_size=8, seed=20,
            checkpoints=(2, 4), on_checkpoint=lambda epoch, model: seen.append(epoch),
        )
        assert seen == [2, 4]

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            train_classifier(
                np.zeros((3, 2)), np.zeros(4), TransformerConfig(d_model=8, n_heads=2, n_layers=1),
                lr=0.01, weight_decay=0.0, epochs=1, batch_size=2, seed=0,
            )


class TestFullModelGradients:
    def test_full_transformer_head_grad_check(self):
        cfg = TransformerConfig()  # default desk-scale architecture, <= 5k params
        model = TransformerModel.create(cfg, latent_dim=8, seed=21)
        assert model.params.n_parameters() <= 5000
        rng = np.random.default_rng(21)
        z = rng.normal(size=(2, 8))
        y = rng.integers(0, 2, size=(2, 1)).astype(float)

        def build(g, store):
            prob, _ = _forward_nodes(g, model, z)
            return g.binary_cross_entropy(prob, g.input(y))

        assert grad_check(build, model.params, eps=1e-5) < 1e-4


class TestPersistence:
    def test_round_trip(self, tmp_path):
        model = small_model(latent_dim=5, seed=22)
        rng = np.random.default_rng(22)
        z = rng.normal(size=5)
        p_before = predict(model, z).probability
        save_classifier(model, tmp_path / "clf.bin", tmp_path / "clf.json")
        loaded = load_classifier(tmp_path / "clf.bin", tmp_path / "clf.json")
        assert loaded.cfg == model.cfg
        assert predict(loaded, z).probability == p_before
