"""Decode prototypes into feature-condition conjunctions and rank matches.

A stage-3 prototype is a copy of one training part embedding, so it can be
decoded exactly: take the source row's hard-binned one-hot encoding, keep
the slots its binary mask row selects, and translate each surviving slot
into a condition (interval membership for continuous features, equality for
categorical ones). Instance explanations rank prototypes by similarity
1/(1+d) over the same pooled distances the classifier consumed, so the
ranking is the computation itself.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .binning import MODE_HARD, Interval, feature_intervals
from .errors import DataError, ModelError
from .network import Model, forward
from .schema import ROLE_CONTINUOUS, Dataset

KIND_INTERVAL = "interval"
KIND_CATEGORY = "category"


@dataclass(frozen=True)
class Condition:
    """One conjunct: feature in an interval, or feature equals a category."""

    feature: str
    kind: str
    interval: Interval | None = None
    category: str | None = None

    def __post_init__(self) -> None:
        if self.kind == KIND_INTERVAL and self.interval is None:
            raise ModelError("interval condition without an interval")
        if self.kind == KIND_CATEGORY and self.category is None:
            raise ModelError("category condition without a value")

    def render(self, precision: int = 6) -> str:
        if self.kind == KIND_INTERVAL:
            return f"{self.feature} ∈ {self.interval.format(precision)}"
        return f"{self.feature} = {self.category}"

    def to_json(self) -> dict:
        if self.kind == KIND_INTERVAL:
            return {
                "feature": self.feature,
                "kind": self.kind,
                "lower": None if np.isinf(self.interval.lower) else self.interval.lower,
                "upper": None if np.isinf(self.interval.upper) else self.interval.upper,
            }
        return {"feature": self.feature, "kind": self.kind, "value": self.category}


@dataclass
class PrototypeExplanation:
    prototype_id: int
    provenance_row: int
    provenance_part: int
    provenance_label: str
    conditions: list[Condition]
    class_weights: np.ndarray

    def render(self) -> str:
        conj = " ∧ ".join(c.render() for c in self.conditions)
        return conj if conj else "(empty conjunction)"


@dataclass
class Match:
    prototype_id: int
    similarity: float
    part_index: int
    conditions: list[Condition]
    satisfied: list[bool]


@dataclass
class InstanceExplanation:
    predicted_class: int
    predicted_label: str
    probs: np.ndarray
    matches: list[Match]


def similarity_from_distance(dist: float) -> float:
    """Map a nonnegative distance to a similarity in (0, 1]."""
    if dist < 0:
        raise DataError(f"distance must be nonnegative, got {dist}")
    return 1.0 / (1.0 + float(dist))


def _require_stage3(model: Model) -> None:
    if model.stage != 3 or not model.prototypes.has_provenance:
        raise ModelError("stage 3 required: prototypes have no provenance")
    if model.binning.mode != MODE_HARD:
        raise ModelError("decoding requires hard binning mode")
    if model.prototypes.provenance_values is None:
        raise ModelError("model lacks stored provenance rows")


def condition_satisfied(cond: Condition, row: np.ndarray, model: Model) -> bool:
    """Does this raw data row satisfy the condition?"""
    schema = model.schema
    col = schema.feature_columns.index(cond.feature)
    v = float(row[col])
    if np.isnan(v):
        return False
    if cond.kind == KIND_INTERVAL:
        return cond.interval.contains(v)
    vocab = schema.category_vocab[cond.feature]
    return vocab[int(v)] == cond.category


def decode_prototype(model: Model, j: int) -> PrototypeExplanation:
    """Conditions for prototype j from its provenance part's active slots."""
    _require_stage3(model)
    pr = model.prototypes
    if not 0 <= j < pr.n_prototypes:
        raise ModelError(f"prototype index {j} out of range")
    row_values = pr.provenance_values[j]
    part = int(pr.provenance_parts[j])
    trace = forward(row_values, model)
    active = model.masks.values[part] * trace.encoded

    conditions: list[Condition] = []
    for seg in model.layout.segments:
        slots = np.flatnonzero(active[seg.start : seg.stop] != 0.0)
        if slots.size == 0:
            continue
        if seg.kind == ROLE_CONTINUOUS:
            intervals, slot_map = feature_intervals(model.binning, seg.cont_index)
            # one-hot encoding leaves at most one active slot per feature
            conditions.append(
                Condition(seg.feature, KIND_INTERVAL, interval=intervals[int(slot_map[slots[0]])])
            )
        else:
            conditions.append(
                Condition(seg.feature, KIND_CATEGORY, category=seg.categories[int(slots[0])])
            )
    label = (
        model.schema.class_labels[int(pr.provenance_labels[j])]
        if pr.provenance_labels is not None
        else ""
    )
    return PrototypeExplanation(
        prototype_id=j,
        provenance_row=int(pr.provenance_rows[j]),
        provenance_part=part,
        provenance_label=label,
        conditions=conditions,
        class_weights=model.head.w[:, j].copy(),
    )


def explain_instance(model: Model, row: np.ndarray, top_k: int = 5) -> InstanceExplanation:
    """Ranked prototype matches for one row, most similar first."""
    _require_stage3(model)
    if top_k < 0:
        raise ModelError(f"top_k must be >= 0, got {top_k}")
    trace = forward(row, model)
    sims = np.array([similarity_from_distance(d) for d in trace.pooled])
    order = np.argsort(-sims, kind="stable")
    top_k = min(top_k, model.n_prototypes)

    matches: list[Match] = []
    for j in order[:top_k]:
        decoded = decode_prototype(model, int(j))
        satisfied = [condition_satisfied(c, row, model) for c in decoded.conditions]
        matches.append(
            Match(
                prototype_id=int(j),
                similarity=float(sims[j]),
                part_index=int(trace.best_part[j]),
                conditions=decoded.conditions,
                satisfied=satisfied,
            )
        )
    pred = int(np.argmax(trace.probs))
    return InstanceExplanation(
        predicted_class=pred,
        predicted_label=model.schema.class_labels[pred],
        probs=trace.probs,
        matches=matches,
    )


def clamp_interval(interval: Interval, lo: float, hi: float) -> Interval:
    """Clinical rendering: replace infinite endpoints with physiological bounds."""
    lower = lo if np.isinf(interval.lower) else interval.lower
    upper = hi if np.isinf(interval.upper) else interval.upper
    if not lower < upper:
        raise ModelError("clinical bounds collapse the interval")
    return Interval(lower, upper)


def _interval_rows(model: Model, clinical_bounds: dict | None):
    for seg in model.layout.segments:
        if seg.kind != ROLE_CONTINUOUS:
            continue
        intervals, _ = feature_intervals(model.binning, seg.cont_index)
        shown = intervals
        if clinical_bounds and seg.feature in clinical_bounds:
            lo, hi = clinical_bounds[seg.feature]
            shown = [clamp_interval(iv, lo, hi) for iv in intervals]
        yield seg.feature, intervals, shown


def render_instance_text(explanation: InstanceExplanation, instance_id: int) -> str:
    lines = [
        f"instance {instance_id}",
        f"prediction: {explanation.predicted_label}",
        "top prototype matches (* = condition satisfied by this instance):",
    ]
    for m in explanation.matches:
        lines.append(f"  prototype {m.prototype_id}  similarity: {m.similarity:.3f}")
        for cond, sat in zip(m.conditions, m.satisfied):
            mark = "*" if sat else " "
            lines.append(f"    {mark} {cond.render()}")
    return "\n".join(lines) + "\n"


def instance_to_json(explanation: InstanceExplanation, instance_id: int) -> dict:
    return {
        "instance_id": instance_id,
        "prediction": explanation.predicted_label,
        "matches": [
            {
                "prototype_id": m.prototype_id,
                "similarity": m.similarity,
                "part_index": m.part_index,
                "conditions": [c.to_json() for c in m.conditions],
                "satisfied": m.satisfied,
            }
            for m in explanation.matches
        ],
    }


def export_report(
    model: Model,
    out_dir,
    dataset: Dataset | None = None,
    instances: list[int] | None = None,
    clinical_bounds: dict | None = None,
    top_k: int = 5,
) -> list[str]:
    """Write interval, prototype, and optional instance reports; returns paths.

    Output is byte-deterministic for a fixed model: no timestamps, sorted
    JSON keys, repr-exact floats.
    """
    _require_stage3(model)
    os.makedirs(out_dir, exist_ok=True)
    written: list[str] = []

    def emit(name: str, text: str) -> None:
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        written.append(path)

    # (a) interval table
    csv_lines = ["feature,bin,lower,upper,shown_lower,shown_upper"]
    txt_lines = ["Learned intervals per continuous feature", ""]
    for feature, intervals, shown in _interval_rows(model, clinical_bounds):
        txt_lines.append(f"{feature}: " + ", ".join(iv.format(4) for iv in shown))
        for b, (iv, sv) in enumerate(zip(intervals, shown)):
            csv_lines.append(
                f"{feature},{b},{repr(iv.lower)},{repr(iv.upper)},{repr(sv.lower)},{repr(sv.upper)}"
            )
    emit("intervals.csv", "\n".join(csv_lines) + "\n")
    emit("intervals.txt", "\n".join(txt_lines) + "\n")

    # (b) decoded prototypes
    decoded = [decode_prototype(model, j) for j in range(model.n_prototypes)]
    proto_json = [
        {
            "prototype_id": e.prototype_id,
            "provenance": {"row": e.provenance_row, "part": e.provenance_part},
            "label": e.provenance_label,
            "conditions": [c.to_json() for c in e.conditions],
            "class_weights": [float(w) for w in e.class_weights],
        }
        for e in decoded
    ]
    emit("prototypes.json", json.dumps(proto_json, indent=2, sort_keys=True) + "\n")
    txt_lines = ["Decoded prototypes", ""]
    for e in decoded:
        txt_lines.append(f"prototype {e.prototype_id} (class {e.provenance_label}): {e.render()}")
    emit("prototypes.txt", "\n".join(txt_lines) + "\n")

    # (c) optional per-instance reports
    if instances:
        if dataset is None:
            raise DataError("instance reports require a dataset")
        for i in instances:
            if not 0 <= i < dataset.rows:
                raise DataError(f"row {i} out of range for {dataset.rows} rows")
            exp = explain_instance(model, dataset.values[i], top_k)
            emit(f"instance_{i}.txt", render_instance_text(exp, i))
            emit(
                f"instance_{i}.json",
                json.dumps(instance_to_json(exp, i), indent=2, sort_keys=True) + "\n",
            )
    return written
