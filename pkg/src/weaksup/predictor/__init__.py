from .attn import AttnEmbed, load_word_vectors
from .base import (
    GradientCheckResult,
    PredictionModule,
    SoftLabelSet,
    TrainConfig,
    gradient_check,
    load_module,
    save_module,
)
from .bow import BowLogistic
from .optim import Adam


def build_module(kind, n_labels, vocab_size, dim=32, attn_dim=5, seed=0, pretrained=None):
    """Construct a predictor by kind name."""
    if kind == "bow_logistic":
        return BowLogistic(n_labels, vocab_size, seed=seed)
    if kind == "attn_embed":
        return AttnEmbed(n_labels, vocab_size, dim=dim, attn_dim=attn_dim, seed=seed, pretrained=pretrained)
    from ..errors import ConfigError

    raise ConfigError(f"unknown predictor kind {kind!r}")


def predict(module, instance):
    return module.predict_proba(instance)


def attention_weights(module, instance):
    return module.attention_weights(instance)


def embed(module, instance, mode="current_pooled"):
    return module.embed(instance, mode)


def train(module, instances, labels, config=None, optimizer=None):
    return module.fit(instances, labels, config, optimizer)


__all__ = [
    "Adam",
    "AttnEmbed",
    "BowLogistic",
    "GradientCheckResult",
    "PredictionModule",
    "SoftLabelSet",
    "TrainConfig",
    "build_module",
    "gradient_check",
    "load_module",
    "save_module",
    "load_word_vectors",
    "predict",
    "attention_weights",
    "embed",
    "train",
]
