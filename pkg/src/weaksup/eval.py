"""Held-out evaluation of a trained predictor."""

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass
class Metrics:
    accuracy: float
    per_class_accuracy: dict
    confusion: list  # confusion[gold][pred] counts
    n_test: int

    def to_json(self):
        return {
            "accuracy": self.accuracy,
            "per_class_accuracy": self.per_class_accuracy,
            "confusion": self.confusion,
            "n_test": self.n_test,
        }


def evaluate(module, dataset):
    """Accuracy of argmax predictions on the gold-labeled test split.

    Ties in the predicted distribution resolve to the first label.
    """
    test = dataset.test
    if not test:
        raise DataError("dataset has no test split")
    for inst in test:
        if inst.gold_label is None:
            raise DataError(f"test instance {inst.id!r} lacks a gold label")
    probs = module.predict_proba_batch(test)
    preds = np.argmax(probs, axis=1)
    golds = np.array([inst.gold_label for inst in test])
    L = dataset.n_labels
    confusion = np.zeros((L, L), dtype=int)
    for g, p in zip(golds, preds):
        confusion[g, p] += 1
    per_class = {}
    for c, name in enumerate(dataset.label_set):
        total = int(confusion[c].sum())
        per_class[name] = float(confusion[c, c] / total) if total else 0.0
    return Metrics(
        accuracy=float((preds == golds).mean()),
        per_class_accuracy=per_class,
        confusion=confusion.tolist(),
        n_test=len(test),
    )
