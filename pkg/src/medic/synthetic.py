"""Deterministic synthetic tabular generators for tests and calibration.

Rows carry class-dependent structure a bin-and-prototype model can learn:
each class anchors every continuous feature near one of three well-spread
levels (different scales per feature) and prefers one category per
categorical feature. Optional missingness pokes NaN/placeholder holes for
imputation tests.
"""

from __future__ import annotations

import numpy as np

from .schema import (
    ROLE_CATEGORICAL,
    ROLE_CONTINUOUS,
    ROLE_TARGET,
    Dataset,
    FeatureSchema,
)

_VOCAB = ("low", "mid", "high")


def make_synthetic(
    rows: int = 200,
    n_classes: int = 3,
    n_continuous: int = 4,
    n_categorical: int = 2,
    seed: int = 0,
    noise: float = 0.15,
    missing_rate: float = 0.0,
    prefer_rate: float = 0.8,
) -> Dataset:
    """Class-structured mixed-type dataset; every class is present."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, n_classes, size=rows).astype(np.int64)
    labels[:n_classes] = np.arange(n_classes)
    labels = labels[rng.permutation(rows)]

    # per (class, feature) anchor level in {0, 1, 2}
    cont_level = rng.integers(0, 3, size=(n_classes, n_continuous))
    cat_pref = rng.integers(0, len(_VOCAB), size=(n_classes, n_categorical))

    anchors = np.array([-1.5, 0.0, 1.5])
    scales = np.array([10.0 ** ((f % 4) - 1) for f in range(n_continuous)])
    offsets = np.array([5.0 * f for f in range(n_continuous)])

    values = np.zeros((rows, n_continuous + n_categorical), dtype=np.float64)
    for f in range(n_continuous):
        level = anchors[cont_level[labels, f]]
        values[:, f] = offsets[f] + scales[f] * (level + noise * rng.standard_normal(rows))
    for g in range(n_categorical):
        preferred = cat_pref[labels, g]
        coin = rng.uniform(size=rows) < prefer_rate
        random_cat = rng.integers(0, len(_VOCAB), size=rows)
        values[:, n_continuous + g] = np.where(coin, preferred, random_cat).astype(np.float64)

    if missing_rate > 0.0:
        holes = rng.uniform(size=values.shape) < missing_rate
        # keep at least one observed cell per column so imputation can fit
        for j in range(values.shape[1]):
            if holes[:, j].all():
                holes[0, j] = False
        values[holes] = np.nan

    columns = (
        [(f"cont{f}", ROLE_CONTINUOUS) for f in range(n_continuous)]
        + [(f"cat{g}", ROLE_CATEGORICAL) for g in range(n_categorical)]
        + [("label", ROLE_TARGET)]
    )
    schema = FeatureSchema(
        columns=columns,
        category_vocab={f"cat{g}": list(_VOCAB) for g in range(n_categorical)},
        class_labels=[f"c{k}" for k in range(n_classes)],
    )
    return Dataset(schema=schema, values=values, labels=labels)


def make_separable(rows: int = 120, seed: int = 0) -> Dataset:
    """Two continuous features, two classes, zero overlap between classes."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, size=rows).astype(np.int64)
    labels[:2] = np.array([0, 1])
    labels = labels[rng.permutation(rows)]
    sign = np.where(labels == 0, -1.0, 1.0)
    values = np.zeros((rows, 2), dtype=np.float64)
    values[:, 0] = sign * (3.0 + rng.uniform(0.0, 1.0, size=rows))
    values[:, 1] = sign * (30.0 + rng.uniform(0.0, 10.0, size=rows))
    schema = FeatureSchema(
        columns=[("x0", ROLE_CONTINUOUS), ("x1", ROLE_CONTINUOUS), ("y", ROLE_TARGET)],
        class_labels=["neg", "pos"],
    )
    return Dataset(schema=schema, values=values, labels=labels)
