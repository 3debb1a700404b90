import pytest

from weaksup.corpus import build_dataset


def make_records(texts_labels, split="train", tuples=None, prefix="i"):
    records = []
    for n, (text, label) in enumerate(texts_labels):
        records.append(
            {
                "id": f"{prefix}{n:03d}",
                "text": text,
                "label": label,
                "tuple": None if tuples is None else tuples[n],
                "split": split,
            }
        )
    return records


@pytest.fixture
def tiny_dataset():
    """Three train + two test instances over {neg, pos}."""
    records = make_records(
        [
            ("good fun movie", "pos"),
            ("bad dull movie", "neg"),
            ("good good plot", "pos"),
        ]
    ) + make_records(
        [("good story", "pos"), ("bad story", "neg")], split="test", prefix="t"
    )
    return build_dataset(records, labels=["neg", "pos"])


@pytest.fixture
def tuple_dataset():
    """Four train instances sharing one tuple key, for at-least-one factors."""
    records = make_records(
        [
            ("alpha beta", "pos"),
            ("alpha gamma", "neg"),
            ("beta gamma", "neg"),
            ("alpha beta gamma", "neg"),
        ],
        tuples=["t1", "t1", "t1", "t1"],
    ) + make_records([("alpha beta", "pos")], split="test", prefix="t")
    return build_dataset(records, labels=["neg", "pos"])
