import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from weaksup.corpus import (
    OOV_ID,
    OracleRuleSet,
    SyntheticConfig,
    build_dataset,
    generate_oracle,
    generate_synthetic,
    load_dataset,
    save_dataset,
    tokenize,
)
from weaksup.errors import ConfigError, DataError
from weaksup.predictor import BowLogistic, SoftLabelSet, TrainConfig

from conftest import make_records


class TestTokenize:
    def test_empty(self):
        assert tokenize("") == []

    def test_contraction_and_punctuation(self):
        assert tokenize("It's GOOD!") == ["it", "'s", "good", "!"]

    def test_hyphen_splits(self):
        assert tokenize("A-B A-B") == ["a", "-", "b", "a", "-", "b"]

    def test_counts_from_hyphen_example(self):
        records = make_records([("A-B A-B", "pos"), ("x y", "neg")])
        ds = build_dataset(records, labels=["neg", "pos"])
        assert ds.vocabulary.count("a") == 2

    @given(st.text(max_size=200))
    @settings(max_examples=200, deadline=None)
    def test_idempotent_on_joined_output(self, text):
        toks = tokenize(text)
        assert tokenize(" ".join(toks)) == toks


class TestDatasetBuild:
    def test_two_records(self, tiny_dataset):
        assert len(tiny_dataset.train) == 3
        assert len(tiny_dataset.label_set) == 2

    def test_truncation_to_max_len(self, tmp_path):
        long_text = " ".join(f"tok{i}" for i in range(600))
        path = tmp_path / "d.jsonl"
        lines = [
            {"id": "a", "text": long_text, "label": "pos", "tuple": None, "split": "train"},
            {"id": "b", "text": "short", "label": "neg", "tuple": None, "split": "train"},
        ]
        path.write_text("\n".join(json.dumps(r) for r in lines))
        ds = load_dataset(path, labels=["neg", "pos"])
        assert len(ds.by_id("a").tokens) == 512

    def test_missing_field_names_field_and_line(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text(
            json.dumps({"id": "a", "text": "x", "label": "pos", "split": "train"})
            + "\n"
            + json.dumps({"id": "b", "label": "pos", "split": "train"})
        )
        with pytest.raises(DataError, match=r"line 2.*'text'"):
            load_dataset(path, labels=["neg", "pos"])

    def test_malformed_json_names_line(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"id": "a", "text": "x", "label": "pos", "split": "train"}\n{oops')
        with pytest.raises(DataError, match="line 2"):
            load_dataset(path, labels=["neg", "pos"])

    def test_duplicate_id(self):
        records = make_records([("a b", "pos"), ("c d", "neg")])
        records[1]["id"] = records[0]["id"]
        with pytest.raises(DataError, match="duplicate id"):
            build_dataset(records, labels=["neg", "pos"])

    def test_unknown_label(self):
        records = make_records([("a b", "pos"), ("c d", "weird")])
        with pytest.raises(DataError, match="unknown label"):
            build_dataset(records, labels=["neg", "pos"])

    def test_vocab_counts_sum_to_train_tokens(self, tiny_dataset):
        total = sum(len(i.tokens) for i in tiny_dataset.train)
        assert tiny_dataset.vocabulary.total_count() == total

    def test_test_only_tokens_map_to_oov(self):
        records = make_records([("known words", "pos"), ("more words", "neg")]) + make_records(
            [("unseen thing", "pos")], split="test", prefix="t"
        )
        ds = build_dataset(records, labels=["neg", "pos"])
        assert all(t == OOV_ID for t in ds.by_id("t000").tokens)

    def test_round_trip_save_load(self, tiny_dataset, tmp_path):
        path = tmp_path / "ds.jsonl"
        save_dataset(tiny_dataset, path)
        again = load_dataset(path, labels=tiny_dataset.label_set)
        assert [i.id for i in again.instances] == [i.id for i in tiny_dataset.instances]
        assert [i.tokens for i in again.instances] == [i.tokens for i in tiny_dataset.instances]


def base_config(**over):
    cfg = dict(
        labels=["neg", "pos"],
        vocab_size=60,
        n_train=200,
        n_test=200,
        doc_len_min=8,
        doc_len_max=16,
        signal_tokens={"neg": ["w001"], "pos": ["w002"]},
        signal_odds=10.0,
    )
    cfg.update(over)
    return SyntheticConfig(**cfg)


class TestSynthetic:
    def test_deterministic(self, tmp_path):
        a = generate_synthetic(base_config(), seed=7)
        b = generate_synthetic(base_config(), seed=7)
        pa, pb = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        save_dataset(a, pa)
        save_dataset(b, pb)
        assert pa.read_bytes() == pb.read_bytes()

    def test_signal_outside_vocab_rejected(self):
        with pytest.raises(ConfigError, match="outside"):
            generate_synthetic(base_config(signal_tokens={"pos": ["w999"]}), seed=0)

    def test_fixture_mode_guarantees_positive_mention(self):
        cfg = base_config(
            n_train=0,
            n_test=10,
            n_tuples=5,
            instances_per_tuple=4,
            tuple_positive_rate=1.0,
            mention_positive_rate=0.5,
        )
        ds = generate_synthetic(cfg, seed=3)
        by_tuple = {}
        for inst in ds.train:
            by_tuple.setdefault(inst.tuple_key, []).append(inst.gold_label)
        assert len(by_tuple) == 5
        for golds in by_tuple.values():
            assert len(golds) == 4
            assert 1 in golds  # at least one positive mention per positive tuple

    def test_uninformative_odds_yield_chance_accuracy(self):
        cfg = base_config(signal_odds=1.0, n_train=400, n_test=400)
        ds = generate_synthetic(cfg, seed=11)
        module = BowLogistic(2, len(ds.vocabulary))
        train = ds.train
        labels = SoftLabelSet.one_hot(
            [i.id for i in train], [i.gold_label for i in train], 2
        )
        module.fit(train, labels, TrainConfig(epochs=5, learning_rate=0.1, seed=0))
        test = ds.test
        probs = module.predict_proba_batch(test)
        acc = float(
            np.mean(np.argmax(probs, axis=1) == np.array([i.gold_label for i in test]))
        )
        assert acc <= 0.5 + 0.05


class TestOracle:
    def test_planted_signal_token_ranks_top(self):
        ds = generate_synthetic(base_config(n_train=400, n_test=50), seed=5)
        oracle = generate_oracle(ds, k=5, stop_count=0)
        assert "w002" in oracle.tokens_for("pos")
        assert "w001" in oracle.tokens_for("neg")

    def test_deterministic(self):
        ds = generate_synthetic(base_config(n_train=300, n_test=50), seed=5)
        a = generate_oracle(ds, k=5, stop_count=0)
        b = generate_oracle(ds, k=5, stop_count=0)
        assert a.to_json() == b.to_json()

    def test_k_larger_than_support_returns_short_list(self):
        records = make_records(
            [("aa bb", "pos"), ("cc dd", "neg"), ("aa bb aa", "pos"), ("cc dd cc", "neg")]
        )
        ds = build_dataset(records, labels=["neg", "pos"])
        oracle = generate_oracle(ds, k=50, stop_count=0)
        for label in ("pos", "neg"):
            assert 0 < len(oracle.tokens_for(label)) <= 4

    def test_single_class_rejected(self):
        records = make_records([("aa bb", "pos"), ("cc dd", "pos")])
        ds = build_dataset(records, labels=["neg", "pos"])
        with pytest.raises(DataError, match="single class"):
            generate_oracle(ds, k=2)

    def test_mirrored_corpus_gives_mirrored_lists(self):
        swap = {"aa": "bb", "bb": "aa", "cc": "dd", "dd": "cc", "ee": "ff", "ff": "ee"}
        neg_doc = "aa aa aa cc cc ee"
        pos_doc = " ".join(swap[t] for t in neg_doc.split())
        records = make_records([(neg_doc, "neg"), (pos_doc, "pos")] * 8)
        ds = build_dataset(records, labels=["neg", "pos"])
        oracle = generate_oracle(ds, k=3, stop_count=0)
        neg_list = oracle.tokens_for("neg")
        pos_list = oracle.tokens_for("pos")
        assert [swap[t] for t in neg_list] == pos_list

    def test_lists_disjoint_from_stop_tokens(self):
        ds = generate_synthetic(base_config(n_train=400, n_test=50, n_common=5), seed=5)
        oracle = generate_oracle(ds, k=10, stop_count=5)
        stops = set(ds.vocabulary.stop_tokens(5))
        for label in ds.label_set:
            assert not (set(oracle.tokens_for(label)) & stops)

    def test_json_round_trip(self, tmp_path):
        ds = generate_synthetic(base_config(n_train=200, n_test=50), seed=5)
        oracle = generate_oracle(ds, k=4, stop_count=0)
        path = tmp_path / "oracle.json"
        oracle.save(path)
        again = OracleRuleSet.load(path)
        assert again.to_json() == oracle.to_json()
