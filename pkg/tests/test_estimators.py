import numpy as np
import pytest
from sklearn.base import clone

from weaksup.corpus import generate_oracle
from weaksup.estimators import DPLClassifier, S4Classifier
from weaksup.evidence import TokenUnary

from test_dpl import seed_evidence, separable_dataset
from test_s4 import noisy_config, noisy_seeds
from weaksup.corpus import generate_synthetic


class TestDPLClassifier:
    def test_fit_predict_score(self):
        ds = separable_dataset(seed=0)
        clf = DPLClassifier(
            seed_evidence=seed_evidence(ds).templates,
            em_iterations=2,
            epochs=3,
            learning_rate=0.1,
            seed=0,
        )
        clf.fit(ds)
        assert clf.score(ds) >= 0.9
        preds = clf.predict(["w020 w021 filler", "w010 w011 filler"])
        assert list(preds) == ["pos", "neg"]
        probs = clf.predict_proba(["w020 w021"])
        assert probs.shape == (1, 2)
        assert probs.sum() == pytest.approx(1.0)

    def test_get_params_and_clone(self):
        clf = DPLClassifier(em_iterations=2, learning_rate=0.01, seed=3)
        params = clf.get_params()
        assert params["em_iterations"] == 2
        assert params["learning_rate"] == 0.01
        cloned = clone(clf)
        assert cloned.get_params() == params

    def test_set_params(self):
        clf = DPLClassifier()
        clf.set_params(epochs=7, predictor="attn_embed")
        assert clf.epochs == 7
        assert clf.predictor == "attn_embed"


class TestS4Classifier:
    def test_sst_only_fit(self):
        ds = generate_synthetic(noisy_config(n_train=160, n_test=80), seed=0)
        clf = S4Classifier(
            seed_evidence=noisy_seeds().templates,
            modes=("entropy",),
            outer_iterations=2,
            em_iterations=2,
            epochs=3,
            learning_rate=0.1,
            pool_fraction=0.2,
            stop_count=10,
            seed=0,
        )
        clf.fit(ds)
        assert len(clf.evidence_) > 4
        assert clf.session_.status == "done"
        assert 0.0 <= clf.score(ds) <= 1.0

    def test_scripted_oracle_path(self, tmp_path):
        ds = generate_synthetic(noisy_config(n_train=160, n_test=80), seed=1)
        oracle = generate_oracle(ds, k=12, stop_count=10)
        path = tmp_path / "oracle.json"
        oracle.save(path)
        clf = S4Classifier(
            seed_evidence=noisy_seeds().templates,
            oracle=str(path),
            modes=(),
            budget=2,
            outer_iterations=4,
            em_iterations=1,
            epochs=2,
            learning_rate=0.1,
            pool_fraction=0.2,
            stop_count=10,
            seed=0,
        )
        clf.fit(ds)
        assert clf.session_.answered_count() <= 2
