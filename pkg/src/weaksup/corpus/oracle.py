"""Simulated-expert rule sets from an L1-regularized unigram model.

The oracle is a multinomial logistic bag-of-words model fit by proximal
gradient descent (soft-thresholding step), with the L1 strength chosen by
bisection so that each class keeps a nonzero support between 2k and 8k
tokens. The top-k positive-weight tokens per class become the rule set a
scripted reviewer will accept.
"""

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..errors import DataError
from .data import DEFAULT_STOP_COUNT, OOV_ID


@dataclass
class OracleRuleSet:
    """Per-label ranked token lists, plus an optional joint-pair accept set."""

    per_label: dict  # label name -> list of (token, weight), weight descending
    joint_pairs: list = field(default_factory=list)

    def accepts(self, token, label):
        return any(t == token for t, _ in self.per_label.get(label, []))

    def tokens_for(self, label):
        return [t for t, _ in self.per_label.get(label, [])]

    def to_json(self):
        return {
            "labels": {lab: [[t, float(w)] for t, w in pairs] for lab, pairs in self.per_label.items()},
            "joint_pairs": [list(p) for p in self.joint_pairs],
        }

    @classmethod
    def from_json(cls, obj):
        return cls(
            per_label={lab: [(t, float(w)) for t, w in pairs] for lab, pairs in obj["labels"].items()},
            joint_pairs=[tuple(p) for p in obj.get("joint_pairs", [])],
        )

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def _count_matrix(dataset, n_features):
    rows, cols, vals = [], [], []
    train = dataset.train
    for r, inst in enumerate(train):
        for t in inst.tokens:
            if t != OOV_ID and t < n_features:
                rows.append(r)
                cols.append(t)
                vals.append(1.0)
    X = sp.csr_matrix((vals, (rows, cols)), shape=(len(train), n_features))
    X.sum_duplicates()
    return X


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _fit_l1_logistic(X, Y, lam, step, iters, W0=None, b0=None):
    """ISTA on mean cross-entropy + lam * ||W||_1 (bias unpenalized)."""
    n, V = X.shape
    L = Y.shape[1]
    W = np.zeros((L, V)) if W0 is None else W0.copy()
    b = np.zeros(L) if b0 is None else b0.copy()
    for _ in range(iters):
        P = _softmax(X @ W.T + b)
        R = (P - Y) / n
        gW = R.T @ X
        gW = np.asarray(gW)
        gb = R.sum(axis=0)
        W = W - step * gW
        W = np.sign(W) * np.maximum(np.abs(W) - step * lam, 0.0)
        b = b - step * gb
    return W, b


def generate_oracle(dataset, k, stop_count=DEFAULT_STOP_COUNT, iters=400):
    """Fit the rule-set oracle on gold-labeled train data.

    Requires every train instance to carry a gold label and at least two
    classes to be present. Stop tokens (the `stop_count` most frequent)
    are excluded from the feature set, so returned lists are disjoint
    from them by construction. Deterministic in (dataset, k).
    """
    if k < 1:
        raise DataError("k must be >= 1")
    train = dataset.train
    if not train:
        raise DataError("no train instances")
    golds = []
    for inst in train:
        if inst.gold_label is None:
            raise DataError(f"train instance {inst.id!r} lacks a gold label; oracle needs full labels")
        golds.append(inst.gold_label)
    if len(set(golds)) < 2:
        raise DataError("degenerate dataset: a single class is present")

    V = len(dataset.vocabulary)
    L = dataset.n_labels
    X = _count_matrix(dataset, V)
    stop_ids = {dataset.vocabulary.id_of(t) for t in dataset.vocabulary.stop_tokens(stop_count)}
    keep = np.array([i for i in range(V) if i not in stop_ids], dtype=int)
    if keep.size == 0:
        raise DataError("stop-token list covers the entire vocabulary; nothing to rank")
    X = X[:, keep]
    Y = np.zeros((len(train), L))
    Y[np.arange(len(train)), golds] = 1.0

    # Step size from a power-iteration bound on the Lipschitz constant of
    # the softmax cross-entropy gradient (<= 0.5/n * sigma_max(X^T X)).
    v = np.ones(X.shape[1])
    for _ in range(12):
        v = np.asarray(X.T @ (X @ v)).ravel()
        v = v / max(np.linalg.norm(v), 1e-12)
    sigma = float(v @ np.asarray(X.T @ (X @ v)).ravel())
    step = 1.0 / max(0.5 * sigma / len(train), 1e-9)

    # lam_max: the L1 strength above which the zero solution is stationary.
    P0 = np.full((len(train), L), 1.0 / L)
    g0 = np.asarray(((P0 - Y) / len(train)).T @ X)
    lam_max = float(np.abs(g0).max())
    lo, hi = lam_max * 1e-6, lam_max

    def nnz_per_class(W):
        return (np.abs(W) > 1e-12).sum(axis=1)

    # Bisect on log(lam); if [2k, 8k] support is unattainable (tiny
    # vocabularies), fall back to the densest solution seen.
    fallback = None
    W = b = None
    in_band = False
    for _ in range(24):
        lam = float(np.sqrt(lo * hi))
        W, b = _fit_l1_logistic(X, Y, lam, step, iters, W, b)
        nnz = int(nnz_per_class(W).min())
        if fallback is None or nnz > fallback[0]:
            fallback = (nnz, lam, W.copy(), b.copy())
        if nnz < 2 * k:
            hi = lam
        elif nnz > 8 * k:
            lo = lam
        else:
            in_band = True
            break
    if not in_band:
        _, lam, W, b = fallback

    per_label = {}
    for c, label in enumerate(dataset.label_set):
        w = W[c]
        order = sorted(
            (i for i in range(len(keep)) if w[i] > 1e-12),
            key=lambda i: (-w[i], dataset.vocabulary.token_of(int(keep[i]))),
        )
        per_label[label] = [
            (dataset.vocabulary.token_of(int(keep[i])), float(w[i])) for i in order[:k]
        ]
    return OracleRuleSet(per_label=per_label)
