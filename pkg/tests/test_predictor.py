import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from weaksup.corpus import SyntheticConfig, build_dataset, generate_synthetic
from weaksup.errors import ConfigError
from weaksup.predictor import (
    Adam,
    AttnEmbed,
    BowLogistic,
    SoftLabelSet,
    TrainConfig,
    gradient_check,
    load_module,
    load_word_vectors,
    save_module,
)

from conftest import make_records


def separable_dataset(n=200, seed=0):
    cfg = SyntheticConfig(
        labels=["neg", "pos"],
        vocab_size=40,
        n_train=n,
        n_test=max(50, n // 4),
        doc_len_min=6,
        doc_len_max=12,
        signal_tokens={"neg": ["w001", "w002"], "pos": ["w003", "w004"]},
        signals_per_doc=[1, 2],
        foreign_odds=0.0,
    )
    return generate_synthetic(cfg, seed=seed)


def one_hot_labels(instances, n_labels):
    return SoftLabelSet.one_hot(
        [i.id for i in instances], [i.gold_label for i in instances], n_labels
    )


class TestPredict:
    def test_zero_module_is_uniform(self, tiny_dataset):
        module = BowLogistic(2, len(tiny_dataset.vocabulary))
        for inst in tiny_dataset.instances:
            assert np.allclose(module.predict_proba(inst), [0.5, 0.5], atol=1e-12)

    def test_planted_weight_gives_sigmoid(self):
        records = make_records([("good", "pos"), ("bad", "neg")])
        ds = build_dataset(records, labels=["neg", "pos"])
        module = BowLogistic(2, len(ds.vocabulary))
        module.params["W"][1, ds.vocabulary.id_of("good")] = 2.2
        p = module.predict_proba(ds.by_id("i000"))
        assert p[1] == pytest.approx(1 / (1 + math.exp(-2.2)), abs=1e-12)
        assert p[1] == pytest.approx(0.9003, abs=1e-4)

    def test_attn_zero_output_layer_is_uniform(self, tiny_dataset):
        module = AttnEmbed(2, len(tiny_dataset.vocabulary), dim=8, seed=0)
        for inst in tiny_dataset.instances:
            assert np.allclose(module.predict_proba(inst), [0.5, 0.5], atol=1e-12)

    def test_oov_contributes_nothing(self, tiny_dataset):
        module = BowLogistic(2, len(tiny_dataset.vocabulary))
        module.params["W"][:] = np.random.default_rng(0).normal(size=module.params["W"].shape)
        oov_inst = tiny_dataset.by_id("t000")  # test instance; "story" is OOV
        in_vocab = [t for t in oov_inst.tokens if t >= 0]
        assert len(in_vocab) < len(oov_inst.tokens)

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_distributions_valid_for_random_modules(self, seed):
        rng = np.random.default_rng(seed)
        ds = separable_dataset(n=20, seed=seed % 7)
        module = AttnEmbed(2, len(ds.vocabulary), dim=6, attn_dim=3, seed=seed)
        for name in module.param_names:
            module.params[name][...] = rng.normal(scale=0.5, size=module.params[name].shape)
        probs = module.predict_proba_batch(ds.train[:10])
        assert np.all(probs > 0)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)


class TestAttention:
    def test_single_token_weight_one(self, tiny_dataset):
        records = make_records([("solo", "pos"), ("other", "neg")])
        ds = build_dataset(records, labels=["neg", "pos"])
        module = AttnEmbed(2, len(ds.vocabulary), dim=8, seed=1)
        w = module.attention_weights(ds.by_id("i000"))
        assert w.shape == (1,)
        assert w[0] == pytest.approx(1.0)

    def test_identical_embeddings_give_uniform(self, tiny_dataset):
        module = AttnEmbed(2, len(tiny_dataset.vocabulary), dim=8, seed=1)
        module.params["E"][:] = module.params["E"][0]
        inst = tiny_dataset.by_id("i000")
        w = module.attention_weights(inst)
        assert np.allclose(w, 1.0 / len(inst.tokens), atol=1e-12)

    def test_planted_alignment_dominates(self):
        records = make_records([("alpha filler junk", "pos"), ("filler junk pad", "neg")])
        ds = build_dataset(records, labels=["neg", "pos"])
        module = AttnEmbed(2, len(ds.vocabulary), dim=4, attn_dim=4, seed=0)
        module.params["P"][...] = np.eye(4)
        module.params["pb"][...] = 0.0
        module.params["c"][...] = np.array([1.0, 0.0, 0.0, 0.0])
        module.params["E"][...] = 0.0
        module.params["E"][ds.vocabulary.id_of("alpha")] = [2.0, 0, 0, 0]
        module.params["E"][ds.vocabulary.id_of("filler")] = [0.2, 0, 0, 0]
        module.params["E"][ds.vocabulary.id_of("junk")] = [0.2, 0, 0, 0]
        inst = ds.by_id("i000")
        w = module.attention_weights(inst)
        assert w[0] > w[1] and w[0] > w[2]

    @given(st.integers(0, 1000))
    @settings(max_examples=25, deadline=None)
    def test_normalization_property(self, seed):
        ds = separable_dataset(n=12, seed=seed % 5)
        module = AttnEmbed(2, len(ds.vocabulary), dim=6, seed=seed)
        rng = np.random.default_rng(seed)
        module.params["c"][...] = rng.normal(size=module.params["c"].shape)
        for inst in ds.train:
            w = module.attention_weights(inst)
            assert np.all(w >= 0)
            assert w.sum() == pytest.approx(1.0, abs=1e-9)

    def test_bow_fallback_uniform(self, tiny_dataset):
        module = BowLogistic(2, len(tiny_dataset.vocabulary))
        inst = tiny_dataset.by_id("i000")
        assert np.allclose(module.attention_weights(inst), 1 / 3)


class TestEmbed:
    def test_single_token_current_pooled_is_embedding_row(self):
        records = make_records([("solo", "pos"), ("other", "neg")])
        ds = build_dataset(records, labels=["neg", "pos"])
        module = AttnEmbed(2, len(ds.vocabulary), dim=8, seed=2)
        vec = module.embed(ds.by_id("i000"), "current_pooled")
        assert np.allclose(vec, module.params["E"][ds.vocabulary.id_of("solo")], atol=1e-12)

    def test_identical_instances_cosine_one(self, tiny_dataset):
        module = AttnEmbed(2, len(tiny_dataset.vocabulary), dim=8, seed=2)
        inst = tiny_dataset.by_id("i000")
        for mode in ("pretrained_mean", "current_pooled"):
            a = module.embed(inst, mode)
            b = module.embed(inst, mode)
            cos = a @ b / (np.linalg.norm(a) * np.linalg.norm(b))
            assert cos == pytest.approx(1.0, abs=1e-12)

    def test_untrained_tables_agree_per_token(self):
        records = make_records([("solo", "pos"), ("other", "neg")])
        ds = build_dataset(records, labels=["neg", "pos"])
        module = AttnEmbed(2, len(ds.vocabulary), dim=8, seed=2)
        inst = ds.by_id("i000")
        assert np.allclose(
            module.embed(inst, "pretrained_mean"), module.embed(inst, "current_pooled"), atol=1e-12
        )

    def test_all_oov_gives_zero_vector(self, tiny_dataset):
        from weaksup.corpus import Instance

        module = AttnEmbed(2, len(tiny_dataset.vocabulary), dim=8, seed=2)
        oov = Instance(id="x", tokens=(-1, -1), raw_text="zz yy", split="test")
        assert np.allclose(module.embed(oov, "current_pooled"), 0.0)
        assert np.allclose(module.embed(oov, "pretrained_mean"), 0.0)
        # attention falls back to uniform on the degenerate instance
        assert np.allclose(module.attention_weights(oov), 0.5)

    def test_bow_embed_rejected(self, tiny_dataset):
        module = BowLogistic(2, len(tiny_dataset.vocabulary))
        with pytest.raises(ConfigError):
            module.embed(tiny_dataset.by_id("i000"))


class TestTraining:
    def test_one_hot_reduces_to_supervised(self, tiny_dataset):
        module = BowLogistic(2, len(tiny_dataset.vocabulary))
        train = tiny_dataset.train
        labels = one_hot_labels(train, 2)
        sup = -np.log(0.5)  # initial uniform CE vs (near) one-hot targets
        assert module.loss(train, labels) == pytest.approx(sup, abs=1e-6)

    def test_separable_data_reaches_high_train_accuracy(self):
        ds = separable_dataset(n=200, seed=1)
        module = BowLogistic(2, len(ds.vocabulary))
        train = ds.train
        module.fit(train, one_hot_labels(train, 2), TrainConfig(epochs=5, learning_rate=0.1, seed=0))
        preds = np.argmax(module.predict_proba_batch(train), axis=1)
        acc = float(np.mean(preds == np.array([i.gold_label for i in train])))
        assert acc >= 0.99

    def test_uniform_targets_push_toward_uniform(self):
        ds = separable_dataset(n=100, seed=2)
        train = ds.train
        module = BowLogistic(2, len(ds.vocabulary))
        # move away from uniform first
        module.fit(train, one_hot_labels(train, 2), TrainConfig(epochs=1, learning_rate=0.1, seed=0))
        uniform = SoftLabelSet([i.id for i in train], np.full((len(train), 2), 0.5))
        module.fit(train, uniform, TrainConfig(epochs=8, learning_rate=0.1, seed=0))
        probs = module.predict_proba_batch(train)
        entropy = float(-(probs * np.log(probs)).sum(axis=1).mean())
        assert entropy >= 0.95 * math.log(2)

    @pytest.mark.parametrize("lr", [0.1, 0.01, 0.001])
    def test_epoch_loss_non_increasing_on_convex_model(self, lr):
        ds = separable_dataset(n=120, seed=3)
        train = ds.train
        module = BowLogistic(2, len(ds.vocabulary))
        losses = module.fit(train, one_hot_labels(train, 2), TrainConfig(epochs=5, learning_rate=lr, seed=0))
        for a, b in zip(losses, losses[1:]):
            assert b <= a + 1e-6

    def test_deterministic_given_seed(self):
        ds = separable_dataset(n=60, seed=4)
        train = ds.train

        def run():
            module = AttnEmbed(2, len(ds.vocabulary), dim=8, seed=5)
            losses = module.fit(
                train, one_hot_labels(train, 2), TrainConfig(epochs=2, learning_rate=0.01, seed=9)
            )
            return losses, module.flat_parameters()

        l1, p1 = run()
        l2, p2 = run()
        assert l1 == l2
        assert np.array_equal(p1, p2)

    def test_label_order_mismatch_rejected(self, tiny_dataset):
        module = BowLogistic(2, len(tiny_dataset.vocabulary))
        train = tiny_dataset.train
        labels = one_hot_labels(train[::-1], 2)
        with pytest.raises(Exception, match="order"):
            module.fit(train, labels, TrainConfig(epochs=1))


class TestGradientCheck:
    def test_bow_gradients(self, tiny_dataset):
        module = BowLogistic(2, len(tiny_dataset.vocabulary))
        rng = np.random.default_rng(0)
        module.params["W"][...] = rng.normal(scale=0.3, size=module.params["W"].shape)
        module.params["b"][...] = rng.normal(scale=0.3, size=module.params["b"].shape)
        res = gradient_check(module, tiny_dataset.by_id("i000"), [0.3, 0.7])
        assert res.max_relative_error < 1e-5

    def test_attn_gradients(self):
        ds = separable_dataset(n=10, seed=6)
        module = AttnEmbed(2, len(ds.vocabulary), dim=8, attn_dim=5, seed=7)
        rng = np.random.default_rng(1)
        for name in module.param_names:
            module.params[name][...] = rng.normal(scale=0.3, size=module.params[name].shape)
        res = gradient_check(module, ds.train[0], [0.2, 0.8])
        assert res.max_relative_error < 1e-4

    def test_stationary_point_has_vanishing_gradients(self, tiny_dataset):
        module = BowLogistic(2, len(tiny_dataset.vocabulary))  # uniform predictions
        res = gradient_check(module, tiny_dataset.by_id("i000"), [0.5, 0.5])
        assert res.max_abs_analytic < 1e-8
        assert res.max_abs_numeric < 1e-8


class TestCheckpoints:
    def test_bow_round_trip(self, tmp_path, tiny_dataset):
        module = BowLogistic(2, len(tiny_dataset.vocabulary))
        module.params["W"][...] = np.random.default_rng(0).normal(size=module.params["W"].shape)
        save_module(module, tmp_path / "ckpt")
        again = load_module(tmp_path / "ckpt")
        assert np.array_equal(again.params["W"], module.params["W"])
        inst = tiny_dataset.by_id("i000")
        assert np.array_equal(again.predict_proba(inst), module.predict_proba(inst))

    def test_attn_round_trip_preserves_frozen_table(self, tmp_path):
        ds = separable_dataset(n=10, seed=8)
        module = AttnEmbed(2, len(ds.vocabulary), dim=8, seed=3)
        module.params["E"][...] += 0.5  # diverge from the frozen table
        save_module(module, tmp_path / "ckpt")
        again = load_module(tmp_path / "ckpt")
        assert np.array_equal(again.frozen["E0"], module.frozen["E0"])
        assert np.array_equal(again.params["E"], module.params["E"])

    def test_reinitialize_restores_pretrained(self):
        ds = separable_dataset(n=10, seed=8)
        module = AttnEmbed(2, len(ds.vocabulary), dim=8, seed=3)
        module.params["E"][...] += 1.0
        module.params["U"][...] = 5.0
        module.reinitialize(99)
        assert np.array_equal(module.params["E"], module.frozen["E0"])
        assert np.all(module.params["U"] == 0)


class TestWordVectors:
    def test_load_plain_text(self, tmp_path, tiny_dataset):
        path = tmp_path / "vecs.txt"
        path.write_text("good 1.0 2.0\nbad -1.0 -2.0\n")
        table = load_word_vectors(path, tiny_dataset.vocabulary, dim=2, seed=0)
        gid = tiny_dataset.vocabulary.id_of("good")
        assert np.allclose(table[gid], [1.0, 2.0])

    def test_dimension_mismatch_rejected(self, tmp_path, tiny_dataset):
        path = tmp_path / "vecs.txt"
        path.write_text("good 1.0\n")
        with pytest.raises(Exception, match="expected"):
            load_word_vectors(path, tiny_dataset.vocabulary, dim=2)
