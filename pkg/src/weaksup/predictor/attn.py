"""Attention-pooled embedding predictor.

Tokens are embedded, scored against a trainable context vector through a
small tanh projection, softmax-normalized into attention weights, and
pooled into a document vector that feeds a linear softmax output layer.
The initial embedding table is kept frozen as the "pretrained" reference
for similarity scoring; re-initialization restarts the trainable table
from it.
"""

import logging

import numpy as np

from ..corpus.data import OOV_ID
from ..errors import ConfigError, DataError
from .base import PredictionModule

log = logging.getLogger(__name__)

INIT_SCALE = 0.05


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class AttnEmbed(PredictionModule):
    kind = "attn_embed"

    def __init__(self, n_labels, vocab_size, dim=32, attn_dim=5, seed=0, pretrained=None):
        super().__init__(n_labels, vocab_size)
        self.dim = dim
        self.attn_dim = attn_dim
        self.seed = seed
        if pretrained is not None:
            pretrained = np.asarray(pretrained, dtype=float)
            if pretrained.shape != (vocab_size, dim):
                raise ConfigError(
                    f"pretrained table shape {pretrained.shape} != ({vocab_size}, {dim})"
                )
            E0 = pretrained.copy()
        else:
            rng = np.random.default_rng(seed)
            E0 = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(vocab_size, dim))
        self.frozen = {"E0": E0}
        self.params = {
            "E": E0.copy(),
            "P": np.zeros((attn_dim, dim)),
            "pb": np.zeros(attn_dim),
            "c": np.zeros(attn_dim),
            "U": np.zeros((n_labels, dim)),
            "ub": np.zeros(n_labels),
        }
        self.param_names = ["E", "P", "pb", "c", "U", "ub"]
        self._draw_attention(seed)

    def _draw_attention(self, seed):
        rng = np.random.default_rng(seed + 1)
        self.params["P"][...] = rng.uniform(-INIT_SCALE, INIT_SCALE, self.params["P"].shape)
        self.params["pb"][...] = rng.uniform(-INIT_SCALE, INIT_SCALE, self.params["pb"].shape)
        self.params["c"][...] = rng.uniform(-INIT_SCALE, INIT_SCALE, self.params["c"].shape)

    def checkpoint_config(self):
        return {"dim": self.dim, "attn_dim": self.attn_dim, "seed": self.seed}

    def reinitialize(self, seed):
        """Restart training state: embeddings back to the frozen table,
        fresh attention draws, zeroed (uniform) output layer."""
        self.seed = seed
        self.params["E"][...] = self.frozen["E0"]
        self._draw_attention(seed)
        self.params["U"][...] = 0.0
        self.params["ub"][...] = 0.0

    # -- forward --------------------------------------------------------

    def _featurize(self, instances):
        T = max(len(inst.tokens) for inst in instances)
        ids = np.zeros((len(instances), T), dtype=int)
        valid = np.zeros((len(instances), T), dtype=bool)
        for r, inst in enumerate(instances):
            for t, tok in enumerate(inst.tokens):
                if tok != OOV_ID:
                    ids[r, t] = tok
                    valid[r, t] = True
        return ids, valid

    def _forward(self, ids, valid):
        E, P, pb, c, U, ub = (self.params[k] for k in self.param_names)
        m = valid[..., None]
        X = E[ids] * m  # (B,T,d); OOV and padding contribute zero
        A1 = X @ P.T + pb
        Z = np.tanh(A1)
        s = Z @ c
        s = np.where(valid, s, -np.inf)
        smax = np.max(np.where(valid, s, -np.inf), axis=1, keepdims=True)
        smax = np.where(np.isfinite(smax), smax, 0.0)
        e = np.where(valid, np.exp(s - smax), 0.0)
        denom = e.sum(axis=1, keepdims=True)
        alpha = np.divide(e, denom, out=np.zeros_like(e), where=denom > 0)
        h = (alpha[..., None] * X).sum(axis=1)
        logits = h @ U.T + ub
        p = _softmax(logits)
        return {"X": X, "Z": Z, "alpha": alpha, "h": h, "p": p, "valid": valid, "ids": ids}

    def predict_proba_batch(self, instances):
        ids, valid = self._featurize(instances)
        return self._forward(ids, valid)["p"]

    def attention_weights(self, instance):
        ids, valid = self._featurize([instance])
        if not valid.any():
            # every token out-of-vocabulary: degenerate uniform fallback
            n = len(instance.tokens)
            return np.full(n, 1.0 / n)
        alpha = self._forward(ids, valid)["alpha"][0]
        return alpha[: len(instance.tokens)]

    def attention_weights_batch(self, instances):
        ids, valid = self._featurize(instances)
        alpha = self._forward(ids, valid)["alpha"]
        out = []
        for r, inst in enumerate(instances):
            n = len(inst.tokens)
            if not valid[r].any():
                out.append(np.full(n, 1.0 / n))
            else:
                out.append(alpha[r, :n])
        return out

    def embed(self, instance, mode="current_pooled"):
        ids, valid = self._featurize([instance])
        if not valid.any():
            log.warning("instance %s is entirely out-of-vocabulary; zero embedding", instance.id)
            return np.zeros(self.dim)
        if mode == "pretrained_mean":
            rows = self.frozen["E0"][ids[0][valid[0]]]
            return rows.mean(axis=0)
        if mode == "current_pooled":
            return self._forward(ids, valid)["h"][0]
        raise ConfigError("embed mode must be 'pretrained_mean' or 'current_pooled'")

    def embed_batch(self, instances, mode="current_pooled"):
        """(N, d) embeddings; all-OOV rows come back as zero vectors."""
        ids, valid = self._featurize(instances)
        if mode == "pretrained_mean":
            m = valid[..., None]
            rows = self.frozen["E0"][ids] * m
            n = np.maximum(valid.sum(axis=1, keepdims=True), 1)
            return rows.sum(axis=1) / n
        if mode == "current_pooled":
            return self._forward(ids, valid)["h"]
        raise ConfigError("embed mode must be 'pretrained_mean' or 'current_pooled'")

    # -- backward -------------------------------------------------------

    def _prepare_training(self, instances):
        return self._featurize(instances)

    def _prepared_loss_grads(self, prep, sel, Q, omega):
        ids, valid = prep
        return self._loss_grads_from_features(ids[sel], valid[sel], Q, omega)

    def _batch_loss_grads(self, instances, Q, omega):
        ids, valid = self._featurize(instances)
        return self._loss_grads_from_features(ids, valid, Q, omega)

    def _loss_grads_from_features(self, ids, valid, Q, omega):
        f = self._forward(ids, valid)
        X, Z, alpha, h, p = f["X"], f["Z"], f["alpha"], f["h"], f["p"]
        E, P, pb, c, U, ub = (self.params[k] for k in self.param_names)
        B = ids.shape[0]

        ce = -(Q * np.log(np.clip(p, 1e-300, 1.0))).sum(axis=1)
        loss = float((omega * ce).mean())

        dlogits = (omega[:, None] * (p - Q)) / B  # (B,L)
        dU = dlogits.T @ h
        dub = dlogits.sum(axis=0)
        dh = dlogits @ U  # (B,d)

        dalpha = np.einsum("bd,btd->bt", dh, X)
        dX = alpha[..., None] * dh[:, None, :]
        ds = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
        dc = np.einsum("bt,bta->a", ds, Z)
        dZ = ds[..., None] * c
        dA1 = (1.0 - Z * Z) * dZ
        dA1 = dA1 * valid[..., None]  # no gradient through masked positions
        dP = np.einsum("bta,btd->ad", dA1, X)
        dpb = dA1.sum(axis=(0, 1))
        dX = dX + dA1 @ P
        dX = dX * valid[..., None]

        dE = np.zeros_like(E)
        np.add.at(dE, ids[valid], dX[valid])

        grads = {"E": dE, "P": dP, "pb": dpb, "c": dc, "U": dU, "ub": dub}
        return loss, grads


def load_word_vectors(path, vocabulary, dim, seed=0):
    """Build a (V, dim) table from a plain-text "word v1 ... vd" file.

    Words absent from the file keep a seeded uniform draw so the table is
    fully populated either way.
    """
    rng = np.random.default_rng(seed)
    table = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(len(vocabulary), dim))
    found = 0
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                raise DataError(f"{path}: line {n}: expected a word plus {dim} values")
            tid = vocabulary.id_of(parts[0])
            if tid != OOV_ID:
                table[tid] = np.array([float(x) for x in parts[1:]])
                found += 1
    log.info("loaded %d/%d word vectors from %s", found, len(vocabulary), path)
    return table
