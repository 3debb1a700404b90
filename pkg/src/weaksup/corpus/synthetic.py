"""Planted-model corpus generation for tests and benchmarks.

Documents are bags of tokens drawn from a class-conditional emission
distribution over a synthetic vocabulary. Designated "signal" tokens are
over-emitted in their own class (or, in compositional mode, inserted an
explicit number of times per document), designated "common" tokens are
over-emitted everywhere, and the rest of the vocabulary is uninformative
background. Generation is a pure function of (config, seed).
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError
from .data import build_dataset


@dataclass
class SyntheticConfig:
    """Parameters of the planted generator.

    signal_tokens maps each label name to its signal-token list. With
    signals_per_doc set, each document receives exactly that many signal
    tokens drawn uniformly from its class list (compositional mode);
    otherwise signal tokens are over-emitted by `signal_odds` in the
    class-conditional distribution. `foreign_odds` scales emission of
    other classes' signal tokens (0 makes signals exclusive). n_common
    leading vocabulary tokens are over-emitted by `common_odds` in every
    class, giving the corpus a frequent-but-uninformative head.
    """

    labels: list
    vocab_size: int
    n_train: int
    n_test: int
    doc_len_min: int = 20
    doc_len_max: int = 40
    signal_tokens: dict = field(default_factory=dict)
    signal_odds: float = 8.0
    foreign_odds: float = 1.0
    n_common: int = 0
    common_odds: float = 20.0
    signals_per_doc: list | None = None
    guarantee_signal: bool = False
    # solo signals: with probability solo_rate a document carries exactly
    # one token from its class's solo list instead of the regular signals,
    # so these tokens never co-occur with other class evidence
    solo_tokens: dict = field(default_factory=dict)
    solo_rate: float = 0.0
    # at-least-one fixture: groups of train instances sharing a tuple key
    n_tuples: int = 0
    instances_per_tuple: int = 0
    tuple_positive_rate: float = 1.0
    mention_positive_rate: float = 0.5

    def vocab(self):
        width = max(3, len(str(self.vocab_size - 1)))
        return [f"w{i:0{width}d}" for i in range(self.vocab_size)]

    def validate(self):
        if len(self.labels) < 2:
            raise ConfigError("need at least 2 labels")
        if self.vocab_size < 2:
            raise ConfigError("vocab_size must be >= 2")
        if not (1 <= self.doc_len_min <= self.doc_len_max):
            raise ConfigError("document length bounds must satisfy 1 <= min <= max")
        vocab = set(self.vocab())
        for field_name, groups in (("signal", self.signal_tokens), ("solo", self.solo_tokens)):
            for label, toks in groups.items():
                if label not in self.labels:
                    raise ConfigError(f"{field_name} tokens given for unknown label {label!r}")
                for t in toks:
                    if t not in vocab:
                        raise ConfigError(f"{field_name} token {t!r} outside the generated vocabulary")
        if not (0.0 <= self.solo_rate <= 1.0):
            raise ConfigError("solo_rate must lie in [0, 1]")
        if self.n_common > self.vocab_size:
            raise ConfigError("n_common exceeds vocab_size")
        if self.n_tuples and len(self.labels) != 2:
            raise ConfigError("tuple fixture mode requires a binary label set")
        return self

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, obj):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown synthetic config fields: {sorted(unknown)}")
        return cls(**obj)


def _emission_weights(config, vocab_index):
    """Per-class emission weight vectors over the vocabulary."""
    L = len(config.labels)
    V = config.vocab_size
    weights = np.ones((L, V))
    weights[:, : config.n_common] *= config.common_odds
    for label, toks in config.signal_tokens.items():
        li = config.labels.index(label)
        ids = [vocab_index[t] for t in toks]
        for c in range(L):
            weights[c, ids] *= config.signal_odds if c == li else config.foreign_odds
    return weights


def _sample_doc(rng, config, probs, signal_ids, solo_ids, label):
    length = int(rng.integers(config.doc_len_min, config.doc_len_max + 1))
    own = signal_ids[label]
    own_solo = solo_ids[label]
    if config.solo_rate > 0 and len(own_solo) and rng.random() < config.solo_rate:
        body = rng.choice(config.vocab_size, size=length - 1, p=probs[label])
        doc = np.concatenate([body, [rng.choice(own_solo)]]).astype(int)
        rng.shuffle(doc)
    elif config.signals_per_doc is not None:
        k = int(rng.choice(config.signals_per_doc))
        k = min(k, length)
        body = rng.choice(config.vocab_size, size=length - k, p=probs[label])
        sig = rng.choice(own, size=k) if k and len(own) else np.empty(0, dtype=int)
        doc = np.concatenate([body, sig]).astype(int)
        rng.shuffle(doc)
    else:
        doc = rng.choice(config.vocab_size, size=length, p=probs[label]).astype(int)
        if config.guarantee_signal and len(own) and not np.isin(doc, own).any():
            doc[int(rng.integers(length))] = int(rng.choice(own))
    return doc


def generate_synthetic(config, seed):
    """Generate a Dataset from the planted model, deterministically in `seed`."""
    config.validate()
    rng = np.random.default_rng(int(seed))
    vocab = config.vocab()
    vocab_index = {t: i for i, t in enumerate(vocab)}
    weights = _emission_weights(config, vocab_index)
    probs = weights / weights.sum(axis=1, keepdims=True)
    # In compositional mode signal (and solo) tokens are inserted
    # explicitly, so the background distribution should not also emit them.
    if config.signals_per_doc is not None or config.solo_rate > 0:
        bg = np.ones((len(config.labels), config.vocab_size))
        bg[:, : config.n_common] *= config.common_odds
        for label, toks in config.signal_tokens.items():
            ids = [vocab_index[t] for t in toks]
            bg[:, ids] = 0.0 if config.foreign_odds == 0 else bg[:, ids] * config.foreign_odds
            if config.foreign_odds != 0:
                bg[config.labels.index(label), ids] = 1.0
        for toks in config.solo_tokens.values():
            bg[:, [vocab_index[t] for t in toks]] = 0.0
        probs = bg / bg.sum(axis=1, keepdims=True)
    signal_ids = {
        li: np.array([vocab_index[t] for t in config.signal_tokens.get(label, [])], dtype=int)
        for li, label in enumerate(config.labels)
    }
    solo_ids = {
        li: np.array([vocab_index[t] for t in config.solo_tokens.get(label, [])], dtype=int)
        for li, label in enumerate(config.labels)
    }

    records = []

    def emit(prefix, n, split, count_offset=0):
        L = len(config.labels)
        for i in range(n):
            label = i % L
            doc = _sample_doc(rng, config, probs, signal_ids, solo_ids, label)
            records.append(
                {
                    "id": f"{prefix}-{count_offset + i:05d}",
                    "text": " ".join(vocab[t] for t in doc),
                    "label": config.labels[label],
                    "tuple": None,
                    "split": split,
                }
            )

    if config.n_tuples:
        neg, pos = 0, 1
        for t in range(config.n_tuples):
            positive_tuple = rng.random() < config.tuple_positive_rate
            golds = []
            for _ in range(config.instances_per_tuple):
                if positive_tuple:
                    golds.append(pos if rng.random() < config.mention_positive_rate else neg)
                else:
                    golds.append(neg)
            if positive_tuple and pos not in golds:
                golds[int(rng.integers(len(golds)))] = pos
            for m, gold in enumerate(golds):
                doc = _sample_doc(rng, config, probs, signal_ids, solo_ids, gold)
                records.append(
                    {
                        "id": f"train-t{t:03d}-{m:03d}",
                        "text": " ".join(vocab[x] for x in doc),
                        "label": config.labels[gold],
                        "tuple": f"tuple-{t:03d}",
                        "split": "train",
                    }
                )
        emit("test", config.n_test, "test")
    else:
        emit("train", config.n_train, "train")
        emit("test", config.n_test, "test")

    return build_dataset(records, labels=list(config.labels))


def load_synthetic_config(path):
    with open(path, encoding="utf-8") as fh:
        return SyntheticConfig.from_json(json.load(fh))
