"""Estimator-style wrappers so the engine composes with sklearn pipelines.

Both estimators fit on a Dataset (labels hidden from training) and
predict on raw text, carrying the train vocabulary along. Parameters
follow sklearn conventions: stored verbatim in __init__, validated in
fit, fitted state on trailing-underscore attributes.
"""

import numpy as np
from sklearn.base import BaseEstimator

from .corpus.data import Instance, tokenize
from .dpl import DPLConfig, dpl_learn
from .errors import ConfigError
from .evidence import EvidenceSet
from .eval import evaluate
from .corpus.oracle import OracleRuleSet
from .predictor import build_module
from .s4 import S4Config, ScriptedOracle, s4_run
from .validation import check_dataset


def _as_evidence(seed_evidence):
    if isinstance(seed_evidence, EvidenceSet):
        return seed_evidence.clone()
    if isinstance(seed_evidence, str):
        return EvidenceSet.load(seed_evidence)
    if seed_evidence is None:
        return EvidenceSet()
    return EvidenceSet(t.clone() for t in seed_evidence)


class _TextPredictorMixin:
    def _instances_from_texts(self, texts):
        out = []
        for i, text in enumerate(texts):
            toks = tokenize(text)[: self.max_len_]
            if not toks:
                toks = [""]
            out.append(
                Instance(
                    id=f"predict-{i}",
                    tokens=tuple(self.vocabulary_.id_of(t) for t in toks),
                    raw_text=text,
                    split="test",
                )
            )
        return out

    def predict_proba(self, texts):
        return self.module_.predict_proba_batch(self._instances_from_texts(texts))

    def predict(self, texts):
        probs = self.predict_proba(texts)
        return np.array([self.label_set_[i] for i in np.argmax(probs, axis=1)])

    def score(self, dataset):
        """Accuracy on the dataset's gold-labeled test split."""
        return evaluate(self.module_, dataset).accuracy


class DPLClassifier(BaseEstimator, _TextPredictorMixin):
    """EM-trained classifier supervised only by weighted rule evidence."""

    def __init__(
        self,
        seed_evidence=None,
        predictor="bow_logistic",
        em_iterations=3,
        epochs=5,
        learning_rate=None,
        embedding_dim=32,
        attn_dim=5,
        hard_em_imbalance=True,
        warm_start=True,
        seed=0,
    ):
        self.seed_evidence = seed_evidence
        self.predictor = predictor
        self.em_iterations = em_iterations
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.embedding_dim = embedding_dim
        self.attn_dim = attn_dim
        self.hard_em_imbalance = hard_em_imbalance
        self.warm_start = warm_start
        self.seed = seed

    def fit(self, dataset, y=None):
        check_dataset(dataset)
        evidence = _as_evidence(self.seed_evidence)
        module = build_module(
            self.predictor,
            dataset.n_labels,
            len(dataset.vocabulary),
            dim=self.embedding_dim,
            attn_dim=self.attn_dim,
            seed=self.seed,
        )
        config = DPLConfig(
            em_iterations=self.em_iterations,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            hard_em_imbalance=self.hard_em_imbalance,
            warm_start=self.warm_start,
            seed=self.seed,
        )
        result = dpl_learn(evidence, module, dataset, config)
        self.module_ = result.module
        self.evidence_ = result.evidence
        self.beliefs_ = result.beliefs
        self.metrics_ = result.metrics
        self.learning_rate_ = result.learning_rate
        self.vocabulary_ = dataset.vocabulary
        self.label_set_ = list(dataset.label_set)
        self.max_len_ = max(len(i.tokens) for i in dataset.instances)
        return self


class S4Classifier(BaseEstimator, _TextPredictorMixin):
    """Classifier that grows its own rule evidence while training."""

    def __init__(
        self,
        seed_evidence=None,
        oracle=None,
        predictor="bow_logistic",
        modes=("attention",),
        outer_iterations=5,
        budget=0,
        em_iterations=3,
        epochs=5,
        learning_rate=None,
        embedding_dim=32,
        attn_dim=5,
        pool_fraction=0.025,
        stop_count=25,
        seed=0,
    ):
        self.seed_evidence = seed_evidence
        self.oracle = oracle
        self.predictor = predictor
        self.modes = modes
        self.outer_iterations = outer_iterations
        self.budget = budget
        self.em_iterations = em_iterations
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.embedding_dim = embedding_dim
        self.attn_dim = attn_dim
        self.pool_fraction = pool_fraction
        self.stop_count = stop_count
        self.seed = seed

    def _resolve_oracle(self, dataset):
        if self.oracle is None:
            return None
        if callable(self.oracle):
            return self.oracle
        ruleset = (
            self.oracle if isinstance(self.oracle, OracleRuleSet) else OracleRuleSet.load(self.oracle)
        )
        return ScriptedOracle(ruleset, dataset.label_set)

    def fit(self, dataset, y=None):
        check_dataset(dataset)
        evidence = _as_evidence(self.seed_evidence)
        if not evidence.templates:
            raise ConfigError("S4Classifier needs non-empty seed evidence")
        config = S4Config(
            outer_iterations=self.outer_iterations,
            budget=self.budget,
            modes=tuple(self.modes),
            predictor=self.predictor,
            embedding_dim=self.embedding_dim,
            attn_dim=self.attn_dim,
            dpl=DPLConfig(
                em_iterations=self.em_iterations,
                epochs=self.epochs,
                learning_rate=self.learning_rate,
                seed=self.seed,
            ),
            pool_fraction=self.pool_fraction,
            stop_count=self.stop_count,
            seed=self.seed,
        )
        result = s4_run(evidence, dataset, config, oracle=self._resolve_oracle(dataset))
        self.module_ = result.module
        self.evidence_ = result.evidence
        self.session_ = result.session
        self.events_ = result.events
        self.vocabulary_ = dataset.vocabulary
        self.label_set_ = list(dataset.label_set)
        self.max_len_ = max(len(i.tokens) for i in dataset.instances)
        return self
