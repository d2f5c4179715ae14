"""Dataset ingestion: typed feature schemas, CSV loading, imputation, stratified folds.

A schema spec is a small JSON document naming the target column and which
feature columns are continuous vs categorical::

    {"target": "Outcome", "continuous": ["Glucose", "BMI"], "categorical": ["Drug"]}

Columns present in the file but absent from the spec (row ids, free text)
are ignored. The empty string and ``"NA"`` denote missing cells.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError, SchemaError

MISSING_TOKENS = frozenset({"", "NA"})

ROLE_CONTINUOUS = "continuous"
ROLE_CATEGORICAL = "categorical"
ROLE_TARGET = "target"


@dataclass
class FeatureSchema:
    """Per-column typing plus everything fitted from a training file.

    ``columns`` preserves the data file's column order; that order defines the
    layout of encoded vectors downstream. ``category_vocab`` and
    ``class_labels`` record first-appearance order, so index assignments are
    reproducible. ``impute_values`` is empty until :func:`impute_missing` has
    been fitted.
    """

    columns: list[tuple[str, str]]
    category_vocab: dict[str, list[str]] = field(default_factory=dict)
    class_labels: list[str] = field(default_factory=list)
    impute_values: dict[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        targets = [name for name, role in self.columns if role == ROLE_TARGET]
        if len(targets) != 1:
            raise SchemaError(f"schema must declare exactly one target column, got {targets}")
        for name, vocab in self.category_vocab.items():
            if not vocab:
                raise SchemaError(f"categorical column '{name}' has an empty vocabulary")
            if len(set(vocab)) != len(vocab):
                raise SchemaError(f"categorical column '{name}' has duplicate vocabulary entries")

    @property
    def target_column(self) -> str:
        return next(name for name, role in self.columns if role == ROLE_TARGET)

    @property
    def feature_columns(self) -> list[str]:
        return [name for name, role in self.columns if role != ROLE_TARGET]

    @property
    def feature_roles(self) -> list[str]:
        return [role for _, role in self.columns if role != ROLE_TARGET]

    @property
    def continuous_columns(self) -> list[str]:
        return [name for name, role in self.columns if role == ROLE_CONTINUOUS]

    @property
    def categorical_columns(self) -> list[str]:
        return [name for name, role in self.columns if role == ROLE_CATEGORICAL]

    @property
    def n_classes(self) -> int:
        return len(self.class_labels)

    def role_of(self, name: str) -> str:
        for col, role in self.columns:
            if col == name:
                return role
        raise SchemaError(f"unknown column '{name}'")

    def equals(self, other: "FeatureSchema") -> bool:
        return (
            self.columns == other.columns
            and self.category_vocab == other.category_vocab
            and self.class_labels == other.class_labels
            and self.impute_values == other.impute_values
        )


@dataclass
class Dataset:
    """A parsed table: float matrix plus integer labels.

    ``values`` holds one column per non-target schema column, in schema order.
    Continuous cells are raw floats, categorical cells are vocabulary indices
    stored as floats, and missing cells are NaN until imputation.
    """

    schema: FeatureSchema
    values: np.ndarray
    labels: np.ndarray

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.schema.n_classes)

    def has_missing(self) -> bool:
        return bool(np.isnan(self.values).any())

    def subset(self, idx: np.ndarray) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.schema, self.values[idx].copy(), self.labels[idx].copy())

    def equals(self, other: "Dataset") -> bool:
        return (
            self.schema.equals(other.schema)
            and self.values.shape == other.values.shape
            and bool(np.array_equal(self.values, other.values, equal_nan=True))
            and bool(np.array_equal(self.labels, other.labels))
        )


@dataclass
class FoldSplit:
    train_idx: np.ndarray
    test_idx: np.ndarray


def load_schema_spec(source) -> dict:
    """Read and validate a schema spec from a path, JSON string, or dict."""
    if isinstance(source, dict):
        spec = source
    elif isinstance(source, str) and source.lstrip().startswith("{"):
        try:
            spec = json.loads(source)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"schema spec is not valid JSON: {exc}")
    else:
        path = Path(source)
        if not path.exists():
            raise SchemaError(f"schema file not found: {path}")
        try:
            spec = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"schema file {path} is not valid JSON: {exc}")
    if not isinstance(spec, dict) or "target" not in spec:
        raise SchemaError("schema spec must be an object with a 'target' key")
    target = spec["target"]
    continuous = list(spec.get("continuous", []))
    categorical = list(spec.get("categorical", []))
    names = [target] + continuous + categorical
    if len(set(names)) != len(names):
        raise SchemaError("schema spec assigns some column to more than one role")
    if not continuous and not categorical:
        raise SchemaError("schema spec declares no feature columns")
    return {"target": target, "continuous": continuous, "categorical": categorical}


def _read_csv_rows(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"no rows in {path}") from None
        header = [h.strip() for h in header]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(cell.strip() == "" for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            rows.append([cell.strip() for cell in row])
    if not rows:
        raise DataError(f"no rows in {path}")
    return header, rows


def load_dataset(path, schema_spec) -> Dataset:
    """Parse a CSV file against a schema spec.

    Category vocabularies and class labels are assigned indices in order of
    first appearance. Missing cells are left as NaN; run
    :func:`impute_missing` before encoding.
    """
    spec = load_schema_spec(schema_spec)
    header, rows = _read_csv_rows(path)
    col_index = {}
    for i, name in enumerate(header):
        col_index.setdefault(name, i)

    for name in [spec["target"]] + spec["continuous"] + spec["categorical"]:
        if name not in col_index:
            raise SchemaError(f"unknown column '{name}': not present in {path}")

    ordered: list[tuple[str, str]] = []
    for name in header:
        if name == spec["target"]:
            ordered.append((name, ROLE_TARGET))
        elif name in spec["continuous"]:
            ordered.append((name, ROLE_CONTINUOUS))
        elif name in spec["categorical"]:
            ordered.append((name, ROLE_CATEGORICAL))
    # Header order may not repeat schema columns.
    seen = [name for name, _ in ordered]
    if len(set(seen)) != len(seen):
        raise SchemaError(f"duplicate schema column in header of {path}")

    schema = FeatureSchema(columns=ordered)
    feature_cols = schema.feature_columns
    vocab: dict[str, list[str]] = {name: [] for name in spec["categorical"]}
    class_labels: list[str] = []

    n = len(rows)
    values = np.full((n, len(feature_cols)), np.nan, dtype=np.float64)
    labels = np.empty(n, dtype=np.int64)
    tgt = col_index[spec["target"]]

    for r, row in enumerate(rows):
        token = row[tgt]
        if token in MISSING_TOKENS:
            raise DataError(f"row {r + 1}: missing value in target column '{spec['target']}'")
        if token not in class_labels:
            class_labels.append(token)
        labels[r] = class_labels.index(token)
        for j, name in enumerate(feature_cols):
            token = row[col_index[name]]
            if token in MISSING_TOKENS:
                continue
            if schema.role_of(name) == ROLE_CONTINUOUS:
                try:
                    values[r, j] = float(token)
                except ValueError:
                    raise DataError(
                        f"row {r + 1}: non-numeric value '{token}' in continuous column '{name}'"
                    ) from None
            else:
                if token not in vocab[name]:
                    vocab[name].append(token)
                values[r, j] = vocab[name].index(token)

    schema.category_vocab = {name: vocab[name] for name in schema.categorical_columns}
    schema.class_labels = class_labels
    schema.__post_init__()
    return Dataset(schema=schema, values=values, labels=labels)


def load_dataset_with_schema(path, schema: FeatureSchema) -> Dataset:
    """Parse a CSV file against an already-fitted schema.

    Unlike :func:`load_dataset`, category values and class labels outside the
    fitted vocabularies are errors; this is the path used when scoring new
    data with a trained model.
    """
    header, rows = _read_csv_rows(path)
    col_index = {name: i for i, name in enumerate(header)}
    for name, _ in schema.columns:
        if name not in col_index:
            raise SchemaError(f"unknown column '{name}': not present in {path}")

    feature_cols = schema.feature_columns
    n = len(rows)
    values = np.full((n, len(feature_cols)), np.nan, dtype=np.float64)
    labels = np.empty(n, dtype=np.int64)
    tgt = col_index[schema.target_column]

    for r, row in enumerate(rows):
        token = row[tgt]
        if token not in schema.class_labels:
            raise DataError(
                f"row {r + 1}: label '{token}' outside declared classes {schema.class_labels}"
            )
        labels[r] = schema.class_labels.index(token)
        for j, name in enumerate(feature_cols):
            token = row[col_index[name]]
            if token in MISSING_TOKENS:
                continue
            if schema.role_of(name) == ROLE_CONTINUOUS:
                try:
                    values[r, j] = float(token)
                except ValueError:
                    raise DataError(
                        f"row {r + 1}: non-numeric value '{token}' in continuous column '{name}'"
                    ) from None
            else:
                vocab = schema.category_vocab[name]
                if token not in vocab:
                    raise DataError(
                        f"row {r + 1}: category '{token}' outside vocabulary of column '{name}'"
                    )
                values[r, j] = vocab.index(token)
    return Dataset(schema=schema, values=values, labels=labels)


def _lower_median(sorted_vals: np.ndarray) -> float:
    # Lower-middle element for even counts: deterministic and always a real
    # observed value, which keeps hard-binned encodings honest.
    return float(sorted_vals[(len(sorted_vals) - 1) // 2])


def fit_impute_values(d: Dataset) -> dict[str, object]:
    """Column statistics for gap filling: lower median / first-seen mode."""
    out: dict[str, object] = {}
    for j, name in enumerate(d.schema.feature_columns):
        col = d.values[:, j]
        present = col[~np.isnan(col)]
        if present.size == 0:
            raise DataError(f"column '{name}' is entirely missing")
        if d.schema.role_of(name) == ROLE_CONTINUOUS:
            out[name] = _lower_median(np.sort(present))
        else:
            counts = np.bincount(present.astype(np.int64))
            mode_idx = int(np.argmax(counts))  # ties break to the lowest index
            out[name] = d.schema.category_vocab[name][mode_idx]
    return out


def apply_impute(d: Dataset, impute_values: dict[str, object]) -> Dataset:
    """Fill missing cells from previously fitted statistics."""
    values = d.values.copy()
    for j, name in enumerate(d.schema.feature_columns):
        gap = np.isnan(values[:, j])
        if not gap.any():
            continue
        if name not in impute_values:
            raise DataError(f"no imputation value fitted for column '{name}'")
        fill = impute_values[name]
        if d.schema.role_of(name) == ROLE_CATEGORICAL:
            fill = d.schema.category_vocab[name].index(fill)
        values[gap, j] = float(fill)
    schema = replace(
        d.schema,
        columns=list(d.schema.columns),
        category_vocab=dict(d.schema.category_vocab),
        class_labels=list(d.schema.class_labels),
        impute_values=dict(impute_values),
    )
    return Dataset(schema=schema, values=values, labels=d.labels.copy())


def impute_missing(d: Dataset) -> Dataset:
    """Fit and apply gap filling; the fitted values are recorded in the schema.

    Idempotent: filling with the lower median (or mode) leaves those
    statistics unchanged, so a second pass is a no-op.
    """
    return apply_impute(d, fit_impute_values(d))


def stratified_kfold(d: Dataset, k: int, seed: int) -> list[FoldSplit]:
    """Deterministic stratified k-fold splits.

    Each class's shuffled indices are dealt round-robin across folds, so
    per-class test counts differ by at most one and, whenever a class has at
    least k members, every test fold sees it.
    """
    if k < 2:
        raise DataError(f"fold count must be >= 2, got {k}")
    if k > d.rows:
        raise DataError(f"fold count {k} exceeds {d.rows} rows")
    counts = d.class_counts()
    if (counts == 0).any():
        missing = int(np.argmin(counts))
        raise DataError(f"class {missing} has no instances")

    rng = np.random.default_rng(seed)
    assignment = np.empty(d.rows, dtype=np.int64)
    for cls in range(d.schema.n_classes):
        idx = np.flatnonzero(d.labels == cls)
        idx = idx[rng.permutation(idx.size)]
        for t, row in enumerate(idx):
            assignment[row] = (t + cls) % k

    splits = []
    for f in range(k):
        test = np.flatnonzero(assignment == f)
        train = np.flatnonzero(assignment != f)
        splits.append(FoldSplit(train_idx=train, test_idx=test))
    return splits


def save_dataset(d: Dataset, path) -> None:
    """Write a dataset back to CSV; loading the result recovers an equal Dataset."""
    schema = d.schema
    feature_pos = {name: j for j, name in enumerate(schema.feature_columns)}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([name for name, _ in schema.columns])
        for r in range(d.rows):
            row = []
            for name, role in schema.columns:
                if role == ROLE_TARGET:
                    row.append(schema.class_labels[d.labels[r]])
                    continue
                v = d.values[r, feature_pos[name]]
                if np.isnan(v):
                    row.append("NA")
                elif role == ROLE_CONTINUOUS:
                    row.append(repr(float(v)))
                else:
                    row.append(schema.category_vocab[name][int(v)])
            writer.writerow(row)
