"""Committed JSON Schemas accept the artifacts the package actually emits."""

import json
from pathlib import Path

import jsonschema
import pytest

from weaksup.corpus import SyntheticConfig, generate_oracle, generate_synthetic, save_dataset
from weaksup.evidence import (
    AtLeastOne,
    CorefJoint,
    EvidenceSet,
    FeatureUnary,
    LabelingFunction,
    LabelingFunctionEvidence,
    Predicate,
    SimilarityJoint,
    TokenUnary,
)

SCHEMAS = Path(__file__).resolve().parents[1] / "schemas"


def schema(name):
    with open(SCHEMAS / name, encoding="utf-8") as fh:
        return json.load(fh)


def synth_config():
    return SyntheticConfig(
        labels=["neg", "pos"],
        vocab_size=80,
        n_train=40,
        n_test=20,
        signal_tokens={"neg": ["w001"], "pos": ["w002"]},
        solo_tokens={"pos": ["w003"]},
        solo_rate=0.1,
    )


def test_dataset_records_validate(tmp_path):
    ds = generate_synthetic(synth_config(), seed=0)
    path = tmp_path / "d.jsonl"
    save_dataset(ds, path)
    record_schema = schema("dataset_record.schema.json")
    for line in path.read_text().splitlines():
        jsonschema.validate(json.loads(line), record_schema)


def test_synthetic_config_validates():
    jsonschema.validate(synth_config().to_json(), schema("synthetic_config.schema.json"))


def test_oracle_ruleset_validates():
    ds = generate_synthetic(synth_config(), seed=0)
    oracle = generate_oracle(ds, k=3, stop_count=0)
    jsonschema.validate(oracle.to_json(), schema("oracle_ruleset.schema.json"))


def test_evidence_file_validates():
    ev = EvidenceSet(
        [
            TokenUnary("w001", "neg"),
            FeatureUnary(Predicate("min_tokens", value=3), "pos"),
            LabelingFunctionEvidence(
                LabelingFunction("digits", "neg", Predicate("regex", pattern="[0-9]"))
            ),
            CorefJoint("identical_text"),
            SimilarityJoint((("a", "b"),)),
            AtLeastOne("t1", "pos"),
        ]
    )
    jsonschema.validate(ev.to_json(), schema("evidence_file.schema.json"))
