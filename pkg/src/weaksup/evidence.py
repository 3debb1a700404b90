"""Weighted rule templates and their grounding into label factors.

A template is a first-order rule with one weight shared by every factor
it grounds to. Groundings fall into three semantic families over the
latent label variables: `unary` (formula holds iff the scoped label
equals a target), `pair_eq` (two labels agree), and `at_least_one` (some
label in the scope equals a target). Inputs are baked in at grounding
time, so a grounded factor is a pure function of its scoped labels.
"""

import dataclasses
import json
import math
import re as _re
from dataclasses import dataclass

from .errors import ConfigError, DataError
from .corpus.data import OOV_ID

W_HARD = 10.0
DEFAULT_WEIGHT = 2.2  # log-odds of 90% confidence
DEFAULT_PRIOR_LAMBDA = 5e-8


class Predicate:
    """Declarative boolean condition over an instance.

    Supported ops: contains_token, regex (on raw text), min_tokens,
    max_tokens, and the combinators all / any / not. Serializable to
    JSON so rule files stay data, not code.
    """

    def __init__(self, op, **kwargs):
        self.op = op
        self.args = kwargs
        if op == "regex":
            self._rx = _re.compile(kwargs["pattern"])

    def evaluate(self, instance, dataset):
        op = self.op
        if op == "contains_token":
            tid = dataset.vocabulary.id_of(self.args["token"])
            return tid != OOV_ID and tid in instance.tokens
        if op == "regex":
            return bool(self._rx.search(instance.raw_text))
        if op == "min_tokens":
            return len(instance.tokens) >= self.args["value"]
        if op == "max_tokens":
            return len(instance.tokens) <= self.args["value"]
        if op == "not":
            return not self.args["arg"].evaluate(instance, dataset)
        if op == "all":
            return all(p.evaluate(instance, dataset) for p in self.args["args"])
        if op == "any":
            return any(p.evaluate(instance, dataset) for p in self.args["args"])
        raise ConfigError(f"unknown predicate op {op!r}")

    @property
    def key(self):
        if self.op == "not":
            return ("not", self.args["arg"].key)
        if self.op in ("all", "any"):
            return (self.op, tuple(p.key for p in self.args["args"]))
        return (self.op,) + tuple(sorted(self.args.items()))

    def describe(self):
        if self.op == "contains_token":
            return f"contains '{self.args['token']}'"
        if self.op == "regex":
            return f"text matches /{self.args['pattern']}/"
        if self.op == "min_tokens":
            return f"length >= {self.args['value']}"
        if self.op == "max_tokens":
            return f"length <= {self.args['value']}"
        if self.op == "not":
            return f"not ({self.args['arg'].describe()})"
        joiner = " and " if self.op == "all" else " or "
        return "(" + joiner.join(p.describe() for p in self.args["args"]) + ")"

    def to_json(self):
        if self.op == "not":
            return {"op": "not", "arg": self.args["arg"].to_json()}
        if self.op in ("all", "any"):
            return {"op": self.op, "args": [p.to_json() for p in self.args["args"]]}
        return {"op": self.op, **self.args}

    @classmethod
    def from_json(cls, obj):
        op = obj["op"]
        if op == "not":
            return cls("not", arg=cls.from_json(obj["arg"]))
        if op in ("all", "any"):
            return cls(op, args=[cls.from_json(a) for a in obj["args"]])
        return cls(op, **{k: v for k, v in obj.items() if k != "op"})


@dataclass
class LabelingFunction:
    """A named rule voting one label when its condition holds, else abstaining."""

    name: str
    label: str
    condition: Predicate

    def __call__(self, instance, dataset):
        return self.label if self.condition.evaluate(instance, dataset) else None


@dataclass(kw_only=True)
class EvidenceTemplate:
    weight: float = DEFAULT_WEIGHT
    fixed: bool = False
    prior_mean: float = 0.0
    prior_lambda: float = DEFAULT_PRIOR_LAMBDA
    origin: str = "seed"  # seed | sst | fal
    metadata: dict | None = None

    kind = "abstract"

    @property
    def key(self):
        return (self.kind,) + self._params()

    def _params(self):
        raise NotImplementedError

    def ground(self, dataset, warnings=None):
        raise NotImplementedError

    def describe(self):
        return f"{self.kind}{self._params()}"

    def clone(self):
        """Independent copy (weights mutate during learning)."""
        return dataclasses.replace(self)

    def _common_json(self):
        out = {
            "kind": self.kind,
            "weight": self.weight,
            "fixed": self.fixed,
            "prior_mean": self.prior_mean,
            "prior_lambda": self.prior_lambda,
            "origin": self.origin,
        }
        if self.metadata:
            out["metadata"] = self.metadata
        return out


@dataclass
class GroundedFactor:
    """A concrete factor over specific label variables.

    family is one of unary / pair_eq / at_least_one; `target` is the
    label id for the unary and at_least_one families.
    """

    template: EvidenceTemplate
    scope: tuple
    family: str
    target: int | None = None

    @property
    def weight(self):
        return self.template.weight

    def formula_value(self, assignment):
        """0/1 value of the rule formula for labels over the scope."""
        if len(assignment) != len(self.scope):
            raise DataError("assignment does not cover the factor scope")
        if self.family == "unary":
            return int(assignment[0] == self.target)
        if self.family == "pair_eq":
            return int(assignment[0] == assignment[1])
        if self.family == "at_least_one":
            return int(any(a == self.target for a in assignment))
        raise ConfigError(f"unknown factor family {self.family!r}")


def potential(factor, assignment):
    """exp(weight * formula); always strictly positive."""
    return math.exp(factor.weight * factor.formula_value(assignment))


@dataclass
class TokenUnary(EvidenceTemplate):
    token: str
    label: str
    kind = "token_unary"

    def _params(self):
        return (self.token, self.label)

    def describe(self):
        return f"contains '{self.token}' => {self.label}"

    def ground(self, dataset, warnings=None):
        tid = dataset.vocabulary.id_of(self.token)
        target = dataset.label_id(self.label)
        if tid == OOV_ID:
            if warnings is not None:
                warnings.append(f"token {self.token!r} not in train vocabulary; template has no groundings")
            return []
        return [
            GroundedFactor(self, (inst.id,), "unary", target)
            for inst in dataset.train_with_token(tid)
        ]

    def to_json(self):
        return {**self._common_json(), "token": self.token, "label": self.label}


@dataclass
class FeatureUnary(EvidenceTemplate):
    feature: Predicate
    label: str
    kind = "feature_unary"

    def _params(self):
        return (self.feature.key, self.label)

    def describe(self):
        return f"{self.feature.describe()} => {self.label}"

    def ground(self, dataset, warnings=None):
        target = dataset.label_id(self.label)
        out = [
            GroundedFactor(self, (inst.id,), "unary", target)
            for inst in dataset.train
            if self.feature.evaluate(inst, dataset)
        ]
        if not out and warnings is not None:
            warnings.append(f"feature {self.feature.describe()!r} matches no train instance")
        return out

    def to_json(self):
        return {**self._common_json(), "feature": self.feature.to_json(), "label": self.label}


@dataclass
class DistantSupervision(EvidenceTemplate):
    label: str
    facts: tuple  # tuple keys known to bear the relation `label`
    kind = "distant_supervision"

    def __post_init__(self):
        self.facts = tuple(sorted(self.facts))

    def _params(self):
        return (self.label, self.facts)

    def describe(self):
        return f"known tuple => {self.label} ({len(self.facts)} facts)"

    def ground(self, dataset, warnings=None):
        target = dataset.label_id(self.label)
        facts = set(self.facts)
        out = [
            GroundedFactor(self, (inst.id,), "unary", target)
            for inst in dataset.train
            if inst.tuple_key is not None and inst.tuple_key in facts
        ]
        if not out and warnings is not None:
            warnings.append("no train instance mentions a known fact tuple")
        return out

    def to_json(self):
        return {**self._common_json(), "label": self.label, "facts": list(self.facts)}


@dataclass
class LabelingFunctionEvidence(EvidenceTemplate):
    lf: LabelingFunction
    kind = "labeling_function"

    def _params(self):
        return (self.lf.name, self.lf.label, self.lf.condition.key)

    def describe(self):
        return f"LF {self.lf.name}: {self.lf.condition.describe()} => {self.lf.label}"

    def ground(self, dataset, warnings=None):
        out = []
        for inst in dataset.train:
            vote = self.lf(inst, dataset)
            if vote is not None:
                out.append(GroundedFactor(self, (inst.id,), "unary", dataset.label_id(vote)))
        return out

    def to_json(self):
        return {
            **self._common_json(),
            "name": self.lf.name,
            "label": self.lf.label,
            "condition": self.lf.condition.to_json(),
        }


_COREF_PREDICATES = ("same_tuple_key", "identical_text")


@dataclass
class CorefJoint(EvidenceTemplate):
    predicate: str  # one of _COREF_PREDICATES
    kind = "coref_joint"

    def __post_init__(self):
        if self.predicate not in _COREF_PREDICATES:
            raise ConfigError(f"coref predicate must be one of {_COREF_PREDICATES}")

    def _params(self):
        return (self.predicate,)

    def describe(self):
        return f"labels agree when {self.predicate.replace('_', ' ')}"

    def _match(self, a, b):
        if self.predicate == "same_tuple_key":
            return a.tuple_key is not None and a.tuple_key == b.tuple_key
        return a.raw_text == b.raw_text

    def ground(self, dataset, warnings=None):
        train = dataset.train
        out = []
        for i in range(len(train)):
            for j in range(i + 1, len(train)):
                if self._match(train[i], train[j]):
                    out.append(GroundedFactor(self, (train[i].id, train[j].id), "pair_eq"))
        if not out and warnings is not None:
            warnings.append(f"coref predicate {self.predicate!r} matches no train pair")
        return out

    def to_json(self):
        return {**self._common_json(), "predicate": self.predicate}


@dataclass
class SimilarityJoint(EvidenceTemplate):
    pairs: tuple  # ((id_a, id_b), ...)
    kind = "similarity_joint"

    def __post_init__(self):
        self.pairs = tuple(tuple(p) for p in self.pairs)
        if not self.pairs:
            raise ConfigError("similarity joint template needs at least one pair")

    def _params(self):
        return (self.pairs,)

    def describe(self):
        return f"labels agree on {len(self.pairs)} similar pair(s)"

    def ground(self, dataset, warnings=None):
        train_ids = {inst.id for inst in dataset.train}
        out = []
        for a, b in self.pairs:
            if a not in train_ids or b not in train_ids:
                raise DataError(f"similarity pair ({a!r}, {b!r}) references an unknown train instance")
            out.append(GroundedFactor(self, (a, b), "pair_eq"))
        return out

    def to_json(self):
        return {**self._common_json(), "pairs": [list(p) for p in self.pairs]}


@dataclass
class AtLeastOne(EvidenceTemplate):
    tuple_key: str
    label: str
    kind = "at_least_one"

    def __init__(self, tuple_key, label, *, weight=W_HARD, fixed=True, **kwargs):
        # These are denoising constraints and default to the hard weight.
        super().__init__(weight=weight, fixed=fixed, **kwargs)
        self.tuple_key = tuple_key
        self.label = label

    def _params(self):
        return (self.tuple_key, self.label)

    def describe(self):
        return f"some mention of {self.tuple_key} is {self.label}"

    def ground(self, dataset, warnings=None):
        target = dataset.label_id(self.label)
        scope = tuple(inst.id for inst in dataset.train if inst.tuple_key == self.tuple_key)
        if not scope:
            if warnings is not None:
                warnings.append(f"tuple key {self.tuple_key!r} has no train instances")
            return []
        return [GroundedFactor(self, scope, "at_least_one", target)]

    def to_json(self):
        return {**self._common_json(), "tuple_key": self.tuple_key, "label": self.label}


_KINDS = {
    "token_unary": TokenUnary,
    "feature_unary": FeatureUnary,
    "distant_supervision": DistantSupervision,
    "labeling_function": LabelingFunctionEvidence,
    "coref_joint": CorefJoint,
    "similarity_joint": SimilarityJoint,
    "at_least_one": AtLeastOne,
}


def template_from_json(obj):
    kind = obj.get("kind")
    if kind not in _KINDS:
        raise ConfigError(f"unknown evidence kind {kind!r}")
    common = {
        k: obj[k]
        for k in ("weight", "fixed", "prior_mean", "prior_lambda", "origin", "metadata")
        if k in obj
    }
    if kind == "token_unary":
        return TokenUnary(obj["token"], obj["label"], **common)
    if kind == "feature_unary":
        return FeatureUnary(Predicate.from_json(obj["feature"]), obj["label"], **common)
    if kind == "distant_supervision":
        return DistantSupervision(obj["label"], tuple(obj["facts"]), **common)
    if kind == "labeling_function":
        lf = LabelingFunction(obj["name"], obj["label"], Predicate.from_json(obj["condition"]))
        return LabelingFunctionEvidence(lf, **common)
    if kind == "coref_joint":
        return CorefJoint(obj["predicate"], **common)
    if kind == "similarity_joint":
        return SimilarityJoint(tuple(tuple(p) for p in obj["pairs"]), **common)
    return AtLeastOne(obj["tuple_key"], obj["label"], **common)


class EvidenceSet:
    """Insertion-ordered set of templates, deduplicated by (kind, parameters)."""

    def __init__(self, templates=()):
        self._templates = {}
        for t in templates:
            self.add(t)

    def add(self, template):
        """Add a template; returns False (and changes nothing) on a duplicate key."""
        if template.key in self._templates:
            return False
        self._templates[template.key] = template
        return True

    def __contains__(self, key_or_template):
        key = key_or_template.key if isinstance(key_or_template, EvidenceTemplate) else key_or_template
        return key in self._templates

    def __iter__(self):
        return iter(self._templates.values())

    def __len__(self):
        return len(self._templates)

    @property
    def templates(self):
        return list(self._templates.values())

    def get(self, key):
        return self._templates.get(key)

    def tokens_in_use(self):
        """Tokens referenced by any token-level template (for proposal dedup)."""
        return {t.token for t in self if isinstance(t, TokenUnary)}

    def pairs_in_use(self):
        out = set()
        for t in self:
            if isinstance(t, SimilarityJoint):
                out.update(tuple(sorted(p)) for p in t.pairs)
        return out

    def copy(self):
        return EvidenceSet(self.templates)

    def clone(self):
        """Deep copy: templates are cloned so weights evolve independently."""
        return EvidenceSet(t.clone() for t in self)

    def to_json(self):
        return [t.to_json() for t in self]

    @classmethod
    def from_json(cls, obj):
        return cls(template_from_json(o) for o in obj)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def ground_evidence(evidence, dataset):
    """Ground every template; returns (factors, warnings)."""
    factors, warnings = [], []
    for template in evidence:
        factors.extend(template.ground(dataset, warnings))
    return factors, warnings
