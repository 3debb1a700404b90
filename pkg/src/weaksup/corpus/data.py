"""Tokenization, vocabularies, and the JSONL dataset format.

A Dataset is immutable once built: instances carry token ids resolved
against a vocabulary constructed from the train split only, so nothing
about the test split can leak into rule proposals or evidence grounding.
"""

import json
import re
from collections import Counter
from dataclasses import dataclass, field

from ..errors import DataError

OOV_ID = -1
DEFAULT_MAX_LEN = 512
DEFAULT_STOP_COUNT = 25

_TOKEN_RE = re.compile(r"'\w+|\w+|[^\w\s]")


def tokenize(text):
    """Lowercase `text` and split it into word and punctuation tokens.

    Whitespace separates tokens, punctuation marks become standalone
    tokens, and contractions split at the apostrophe ("it's" -> "it",
    "'s"). Idempotent on its own space-joined output; empty text gives [].
    """
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    """Token <-> dense id bijection with train-corpus occurrence counts."""

    def __init__(self, counts):
        # Ids follow descending count, ties broken lexicographically, so the
        # mapping is a pure function of the counts.
        ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        self._tokens = [t for t, _ in ordered]
        self._ids = {t: i for i, t in enumerate(self._tokens)}
        self._counts = [c for _, c in ordered]

    def __len__(self):
        return len(self._tokens)

    def __contains__(self, token):
        return token in self._ids

    def id_of(self, token):
        """Dense id for `token`, or OOV_ID if it never occurred in train."""
        return self._ids.get(token, OOV_ID)

    def token_of(self, token_id):
        return self._tokens[token_id]

    def count(self, token):
        i = self._ids.get(token)
        return 0 if i is None else self._counts[i]

    def count_by_id(self, token_id):
        return self._counts[token_id]

    @property
    def tokens(self):
        return list(self._tokens)

    def frequency_percentile(self, token):
        """Rank position of `token` by frequency, as a fraction in (0, 1]."""
        i = self._ids.get(token)
        if i is None:
            raise DataError(f"token {token!r} not in vocabulary")
        return (i + 1) / len(self._tokens)

    def stop_tokens(self, k=DEFAULT_STOP_COUNT):
        """The k most frequent tokens; excluded from oracles and proposals."""
        return self._tokens[:k]

    def top_fraction(self, fraction):
        """Tokens in the top `fraction` of the frequency ranking."""
        n = max(1, int(round(fraction * len(self._tokens))))
        return self._tokens[:n]

    def total_count(self):
        return sum(self._counts)


@dataclass(frozen=True)
class Instance:
    """One classification input.

    `tokens` holds vocabulary ids (OOV_ID for tokens unseen in train);
    `gold_label` is only ever read by evaluation and oracle construction.
    """

    id: str
    tokens: tuple
    raw_text: str
    gold_label: int | None = None
    tuple_key: str | None = None
    split: str = "train"


@dataclass
class Dataset:
    instances: list
    label_set: list
    vocabulary: Vocabulary
    _by_id: dict = field(default_factory=dict, repr=False)
    _token_index: dict | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self._by_id:
            self._by_id = {inst.id: inst for inst in self.instances}

    @property
    def n_labels(self):
        return len(self.label_set)

    def label_id(self, name):
        try:
            return self.label_set.index(name)
        except ValueError:
            raise DataError(f"unknown label {name!r}; labels are {self.label_set}") from None

    def label_name(self, label_id):
        return self.label_set[label_id]

    def by_id(self, instance_id):
        try:
            return self._by_id[instance_id]
        except KeyError:
            raise DataError(f"unknown instance id {instance_id!r}") from None

    @property
    def train(self):
        return [inst for inst in self.instances if inst.split == "train"]

    @property
    def test(self):
        return [inst for inst in self.instances if inst.split == "test"]

    def token_strings(self, instance):
        """The (truncated) token strings of an instance, OOV included."""
        return tokenize(instance.raw_text)[: len(instance.tokens)]

    def train_with_token(self, token_id):
        """Train instances containing the token (cached inverted index)."""
        if self._token_index is None:
            index = {}
            for inst in self.train:
                for tid in set(inst.tokens):
                    index.setdefault(tid, []).append(inst)
            self._token_index = index
        return self._token_index.get(token_id, [])


def build_dataset(records, labels=None, max_len=DEFAULT_MAX_LEN):
    """Assemble a Dataset from raw records.

    Each record is a dict with keys id, text, label (name or None),
    tuple (or None), split. The vocabulary and its counts come from the
    train split after truncation to `max_len` tokens.
    """
    if labels is None:
        seen = sorted({r["label"] for r in records if r.get("label") is not None})
        if len(seen) < 2:
            raise DataError("cannot infer a label set with fewer than 2 labels; pass labels explicitly")
        labels = seen
    labels = list(labels)
    if len(labels) < 2:
        raise DataError("label set must contain at least 2 labels")
    label_ids = {name: i for i, name in enumerate(labels)}

    tokenized = []
    counts = Counter()
    ids_seen = set()
    for n, rec in enumerate(records, start=1):
        where = f"line {rec['_line']}" if "_line" in rec else f"record {n}"
        for key in ("id", "text", "split"):
            if key not in rec or rec[key] is None:
                raise DataError(f"{where}: missing required field {key!r}")
        if rec["split"] not in ("train", "test"):
            raise DataError(f"{where}: split must be 'train' or 'test', got {rec['split']!r}")
        if rec["id"] in ids_seen:
            raise DataError(f"{where}: duplicate id {rec['id']!r}")
        ids_seen.add(rec["id"])
        label = rec.get("label")
        if label is not None and label not in label_ids:
            raise DataError(f"{where}: unknown label {label!r}; labels are {labels}")
        toks = tokenize(rec["text"])[:max_len]
        if not toks:
            raise DataError(f"{where}: text tokenizes to nothing")
        if rec["split"] == "train":
            counts.update(toks)
        tokenized.append((rec, toks, label))

    vocab = Vocabulary(counts)
    instances = []
    for rec, toks, label in tokenized:
        instances.append(
            Instance(
                id=rec["id"],
                tokens=tuple(vocab.id_of(t) for t in toks),
                raw_text=rec["text"],
                gold_label=None if label is None else label_ids[label],
                tuple_key=rec.get("tuple"),
                split=rec["split"],
            )
        )
    return Dataset(instances=instances, label_set=labels, vocabulary=vocab)


def load_dataset(path, labels=None, max_len=DEFAULT_MAX_LEN):
    """Load the JSONL dataset format.

    One record per line: {"id": str, "text": str, "label": str|null,
    "tuple": str|null, "split": "train"|"test"}. Errors name the
    offending line.
    """
    records = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {n}: invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise DataError(f"{path}: line {n}: record must be a JSON object")
            rec["_line"] = n
            records.append(rec)
    try:
        return build_dataset(records, labels=labels, max_len=max_len)
    except DataError as exc:
        # build_dataset speaks in record ordinals == line order here
        raise DataError(f"{path}: {exc}") from None


def save_dataset(dataset, path):
    """Write a Dataset back to the JSONL format (raw text preserved)."""
    with open(path, "w", encoding="utf-8") as fh:
        for inst in dataset.instances:
            rec = {
                "id": inst.id,
                "text": inst.raw_text,
                "label": None if inst.gold_label is None else dataset.label_name(inst.gold_label),
                "tuple": inst.tuple_key,
                "split": inst.split,
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
