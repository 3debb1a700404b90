"""Bag-of-words logistic predictor: convex, fully checkable baseline."""

import numpy as np
import scipy.sparse as sp

from ..corpus.data import OOV_ID
from ..errors import ConfigError
from .base import PredictionModule


def count_matrix(instances, vocab_size):
    rows, cols = [], []
    for r, inst in enumerate(instances):
        for t in inst.tokens:
            if t != OOV_ID:
                rows.append(r)
                cols.append(t)
    X = sp.csr_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(len(instances), vocab_size)
    )
    X.sum_duplicates()
    return X


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class BowLogistic(PredictionModule):
    kind = "bow_logistic"

    def __init__(self, n_labels, vocab_size, seed=0):
        super().__init__(n_labels, vocab_size)
        self.seed = seed
        self.params = {
            "W": np.zeros((n_labels, vocab_size)),
            "b": np.zeros(n_labels),
        }
        self.param_names = ["W", "b"]

    def checkpoint_config(self):
        return {"seed": self.seed}

    def reinitialize(self, seed):
        # zero weights give exactly uniform predictions
        self.seed = seed
        self.params["W"][...] = 0.0
        self.params["b"][...] = 0.0

    def predict_proba_batch(self, instances):
        X = count_matrix(instances, self.vocab_size)
        return _softmax(np.asarray(X @ self.params["W"].T) + self.params["b"])

    def attention_weights(self, instance):
        # no attention mechanism; uniform weights are the documented fallback
        n = len(instance.tokens)
        return np.full(n, 1.0 / n)

    def attention_weights_batch(self, instances):
        return [np.full(len(i.tokens), 1.0 / len(i.tokens)) for i in instances]

    def embed(self, instance, mode="current_pooled"):
        raise ConfigError("bag-of-words predictor has no embeddings; use attn_embed")

    def _loss_grads_from_matrix(self, X, Q, omega):
        B = X.shape[0]
        P = _softmax(np.asarray(X @ self.params["W"].T) + self.params["b"])
        ce = -(Q * np.log(np.clip(P, 1e-300, 1.0))).sum(axis=1)
        loss = float((omega * ce).mean())
        D = (omega[:, None] * (P - Q)) / B
        grads = {"W": np.asarray(D.T @ X), "b": D.sum(axis=0)}
        return loss, grads

    def _batch_loss_grads(self, instances, Q, omega):
        return self._loss_grads_from_matrix(count_matrix(instances, self.vocab_size), Q, omega)

    def _prepare_training(self, instances):
        return count_matrix(instances, self.vocab_size)

    def _prepared_loss_grads(self, prep, sel, Q, omega):
        return self._loss_grads_from_matrix(prep[sel], Q, omega)
