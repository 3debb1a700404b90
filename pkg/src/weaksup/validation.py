"""Input validation helpers used at module boundaries."""

import numpy as np

from .errors import ConfigError, DataError


def check_probability_matrix(arr, name="distributions", atol=1e-9):
    """Validate an (N, L) array of row distributions: positive, rows sum to 1."""
    arr = np.asarray(arr, dtype=float)
    if arr.ndim != 2:
        raise DataError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")
    if np.any(arr <= 0):
        raise DataError(f"{name} must be strictly positive")
    sums = arr.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > atol):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise DataError(f"{name} rows must sum to 1 (max deviation {worst:.3g})")
    return arr


def check_in(value, options, name):
    if value not in options:
        raise ConfigError(f"{name} must be one of {sorted(options)}, got {value!r}")
    return value


def check_positive(value, name):
    if value <= 0:
        raise ConfigError(f"{name} must be positive, got {value}")
    return value


def check_unit_interval(value, name, open_ends=False):
    ok = 0.0 < value < 1.0 if open_ends else 0.0 <= value <= 1.0
    if not ok:
        raise ConfigError(f"{name} must lie in the unit interval, got {value}")
    return value


def check_dataset(dataset):
    """Structural checks shared by every consumer of a Dataset."""
    seen = set()
    for inst in dataset.instances:
        if inst.id in seen:
            raise DataError(f"duplicate instance id {inst.id!r}")
        seen.add(inst.id)
        if len(inst.tokens) == 0:
            raise DataError(f"instance {inst.id!r} has no tokens")
        if inst.gold_label is not None and not (0 <= inst.gold_label < len(dataset.label_set)):
            raise DataError(f"instance {inst.id!r} gold label out of range")
    if len(dataset.label_set) < 2:
        raise DataError("label set must contain at least 2 labels")
    return dataset


def label_id_of(dataset, label, name="label"):
    """Resolve a label given by name or index to its index."""
    if isinstance(label, str):
        try:
            return dataset.label_set.index(label)
        except ValueError:
            raise ConfigError(f"{name} {label!r} not in label set {dataset.label_set}") from None
    label = int(label)
    if not (0 <= label < len(dataset.label_set)):
        raise ConfigError(f"{name} index {label} out of range for {len(dataset.label_set)} labels")
    return label
