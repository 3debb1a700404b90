"""Shared predictor machinery: soft labels, training loop, checkpoints."""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DataError, TrainingDiverged
from ..validation import check_probability_matrix
from .optim import Adam


@dataclass
class SoftLabelSet:
    """Per-instance target distributions with per-instance loss weights."""

    instance_ids: list
    distributions: np.ndarray  # (N, L)
    weights: np.ndarray | None = None  # (N,), strictly positive

    def __post_init__(self):
        self.distributions = check_probability_matrix(self.distributions, "soft labels")
        if self.weights is None:
            self.weights = np.ones(len(self.instance_ids))
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (len(self.instance_ids),):
            raise DataError("loss weights must align with instances")
        if np.any(self.weights <= 0):
            raise DataError("loss weights must be strictly positive")

    @classmethod
    def one_hot(cls, instance_ids, labels, n_labels, eps=1e-12):
        """Near-one-hot targets (eps floor keeps distributions strict)."""
        q = np.full((len(instance_ids), n_labels), eps / (n_labels - 1))
        q[np.arange(len(instance_ids)), labels] = 1.0 - eps
        return cls(list(instance_ids), q)


@dataclass
class TrainConfig:
    epochs: int = 5
    batch_size: int = 32
    learning_rate: float = 0.1
    seed: int = 0


class PredictionModule:
    """Trainable classifier over instances: distributions, attention, embeddings."""

    kind = "abstract"

    def __init__(self, n_labels, vocab_size):
        if n_labels < 2:
            raise ConfigError("predictor needs at least 2 labels")
        self.n_labels = n_labels
        self.vocab_size = vocab_size
        self.params = {}
        self.frozen = {}
        self.param_names = []

    # -- inference -----------------------------------------------------

    def predict_proba_batch(self, instances):
        raise NotImplementedError

    def predict_proba(self, instance):
        return self.predict_proba_batch([instance])[0]

    def attention_weights(self, instance):
        raise NotImplementedError

    def attention_weights_batch(self, instances):
        return [self.attention_weights(inst) for inst in instances]

    def embed(self, instance, mode="current_pooled"):
        raise NotImplementedError

    # -- training ------------------------------------------------------

    def _batch_loss_grads(self, instances, Q, omega):
        """Mean weighted cross-entropy over the batch plus parameter grads."""
        raise NotImplementedError

    def loss(self, instances, labels):
        """Full weighted mean cross-entropy of `labels` under the module."""
        p = self.predict_proba_batch(instances)
        ce = -(labels.distributions * np.log(np.clip(p, 1e-300, 1.0))).sum(axis=1)
        return float((labels.weights * ce).mean())

    def _prepare_training(self, instances):
        """Featurize once per fit; subclasses return slicable feature state."""
        return instances

    def _prepared_loss_grads(self, prep, sel, Q, omega):
        return self._batch_loss_grads([prep[i] for i in sel], Q, omega)

    def _prepared_full_loss(self, prep, labels):
        n = len(labels.instance_ids)
        loss, _ = self._prepared_loss_grads(
            prep, np.arange(n), labels.distributions, labels.weights
        )
        return loss

    def fit(self, instances, labels, config=None, optimizer=None):
        """Mini-batch training on soft targets; returns per-epoch loss.

        Epoch losses are evaluated on the full set after each epoch. The
        optimizer owns its own history; callers reset it between EM
        iterations.
        """
        config = config or TrainConfig()
        if len(labels.instance_ids) != len(instances):
            raise DataError("soft labels must cover exactly the training instances")
        for iid, inst in zip(labels.instance_ids, instances):
            if iid != inst.id:
                raise DataError("soft-label order does not match instance order")
        opt = optimizer or Adam(lr=config.learning_rate)
        rng = np.random.default_rng(config.seed)
        n = len(instances)
        prep = self._prepare_training(instances)
        losses = []
        for _ in range(config.epochs):
            order = rng.permutation(n)
            for start in range(0, n, config.batch_size):
                sel = order[start : start + config.batch_size]
                _, grads = self._prepared_loss_grads(
                    prep, sel, labels.distributions[sel], labels.weights[sel]
                )
                opt.step(self.params, grads)
            epoch_loss = self._prepared_full_loss(prep, labels)
            if not np.isfinite(epoch_loss):
                raise TrainingDiverged(f"non-finite loss after epoch {len(losses) + 1}")
            losses.append(epoch_loss)
        return losses

    # -- parameter plumbing ---------------------------------------------

    def flat_parameters(self):
        return np.concatenate([self.params[n].ravel() for n in self.param_names])

    def set_flat_parameters(self, vec):
        off = 0
        for n in self.param_names:
            size = self.params[n].size
            self.params[n][...] = vec[off : off + size].reshape(self.params[n].shape)
            off += size

    def reinitialize(self, seed):
        raise NotImplementedError


@dataclass
class GradientCheckResult:
    max_relative_error: float
    max_abs_analytic: float
    max_abs_numeric: float


def gradient_check(module, instance, soft_label, eps=1e-4):
    """Compare analytic loss gradients against central finite differences.

    The relative error denominator has a 1e-3 absolute floor so that
    finite-difference noise on near-zero gradients is not amplified.
    """
    q = np.asarray(soft_label, dtype=float).reshape(1, -1)
    omega = np.ones(1)
    _, grads = module._batch_loss_grads([instance], q, omega)
    analytic = np.concatenate([grads[n].ravel() for n in module.param_names])

    base = module.flat_parameters()
    numeric = np.zeros_like(base)

    def loss_at(vec):
        module.set_flat_parameters(vec)
        p = module.predict_proba(instance).reshape(1, -1)
        return float(-(q * np.log(np.clip(p, 1e-300, 1.0))).sum())

    for i in range(base.size):
        delta = np.zeros_like(base)
        delta[i] = eps
        numeric[i] = (loss_at(base + delta) - loss_at(base - delta)) / (2 * eps)
    module.set_flat_parameters(base)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-3)
    rel = np.abs(analytic - numeric) / denom
    return GradientCheckResult(
        max_relative_error=float(rel.max()),
        max_abs_analytic=float(np.abs(analytic).max()),
        max_abs_numeric=float(np.abs(numeric).max()),
    )


# -- checkpoints -------------------------------------------------------


def save_module(module, path):
    """JSON header + little-endian float64 blob, as `path`.json / `path`.bin."""
    path = Path(path)
    names = list(module.param_names) + sorted(module.frozen)
    arrays = [module.params[n] for n in module.param_names] + [
        module.frozen[n] for n in sorted(module.frozen)
    ]
    header = {
        "kind": module.kind,
        "n_labels": module.n_labels,
        "vocab_size": module.vocab_size,
        "config": module.checkpoint_config(),
        "dtype": "float64",
        "byte_order": "little",
        "params": [{"name": n, "shape": list(a.shape)} for n, a in zip(names, arrays)],
    }
    with open(path.with_suffix(".json"), "w", encoding="utf-8") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
    blob = np.concatenate([a.ravel() for a in arrays]).astype("<f8")
    blob.tofile(path.with_suffix(".bin"))


def load_module(path):
    from .attn import AttnEmbed
    from .bow import BowLogistic

    path = Path(path)
    with open(path.with_suffix(".json"), encoding="utf-8") as fh:
        header = json.load(fh)
    blob = np.fromfile(path.with_suffix(".bin"), dtype="<f8").astype(float)
    kind = header["kind"]
    if kind == "bow_logistic":
        module = BowLogistic(header["n_labels"], header["vocab_size"])
    elif kind == "attn_embed":
        cfg = header["config"]
        module = AttnEmbed(
            header["n_labels"],
            header["vocab_size"],
            dim=cfg["dim"],
            attn_dim=cfg["attn_dim"],
            seed=cfg["seed"],
        )
    else:
        raise ConfigError(f"unknown module kind {kind!r} in checkpoint")
    off = 0
    for spec in header["params"]:
        shape = tuple(spec["shape"])
        size = int(np.prod(shape)) if shape else 1
        arr = blob[off : off + size].reshape(shape)
        off += size
        if spec["name"] in module.params:
            module.params[spec["name"]][...] = arr
        else:
            module.frozen[spec["name"]][...] = arr
    if off != blob.size:
        raise DataError("checkpoint blob size does not match the header")
    return module
