"""Model persistence: one self-describing JSON document per trained model.

Floats are stored at full repr precision, so a load/save round trip is
byte-identical and reloaded models produce bitwise-equal forward traces.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .binning import BinningParams
from .errors import ModelError
from .network import (
    ClassifierHead,
    ExtractorParams,
    Model,
    PatchMaskMatrix,
    PrototypeSet,
)
from .binning import EncodingLayout
from .schema import FeatureSchema

FORMAT_VERSION = 1


def _arr(a: np.ndarray) -> list:
    return a.tolist()


def _f64(obj) -> np.ndarray:
    return np.asarray(obj, dtype=np.float64)


def _i64(obj) -> np.ndarray:
    return np.asarray(obj, dtype=np.int64)


def model_to_dict(model: Model) -> dict:
    pr = model.prototypes
    return {
        "format_version": FORMAT_VERSION,
        "stage": model.stage,
        "seed": model.seed,
        "train_config": model.train_config,
        "schema": {
            "columns": [[n, r] for n, r in model.schema.columns],
            "category_vocab": model.schema.category_vocab,
            "class_labels": model.schema.class_labels,
            "impute_values": model.schema.impute_values,
        },
        "binning": {
            "mode": model.binning.mode,
            "eps": model.binning.eps,
            "centers": _arr(model.binning.centers),
            "rho": _arr(model.binning.rho),
            "mean": _arr(model.binning.mean),
            "scale": _arr(model.binning.scale),
        },
        "masks": {
            "binarized": model.masks.binarized,
            "values": _arr(model.masks.values),
        },
        "extractor": {
            "w1": _arr(model.extractor.w1),
            "b1": _arr(model.extractor.b1),
            "w2": _arr(model.extractor.w2),
            "b2": _arr(model.extractor.b2),
        },
        "prototypes": {
            "z": _arr(pr.z),
            "provenance_rows": _arr(pr.provenance_rows),
            "provenance_parts": _arr(pr.provenance_parts),
            "provenance_values": None if pr.provenance_values is None else _arr(pr.provenance_values),
            "provenance_labels": None if pr.provenance_labels is None else _arr(pr.provenance_labels),
            "frozen": pr.frozen,
        },
        "head": {
            "w": _arr(model.head.w),
            "b": _arr(model.head.b),
        },
    }


def model_from_dict(doc: dict) -> Model:
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelError(f"unsupported model format version {version!r}")
    stage = doc["stage"]
    if stage not in (1, 2, 3):
        raise ModelError(f"stage marker must be 1, 2 or 3, got {stage!r}")

    s = doc["schema"]
    schema = FeatureSchema(
        columns=[(n, r) for n, r in s["columns"]],
        category_vocab={k: list(v) for k, v in s["category_vocab"].items()},
        class_labels=list(s["class_labels"]),
        impute_values=dict(s["impute_values"]),
    )
    b = doc["binning"]
    binning = BinningParams(
        centers=_f64(b["centers"]),
        rho=_f64(b["rho"]),
        mean=_f64(b["mean"]),
        scale=_f64(b["scale"]),
        mode=b["mode"],
        eps=float(b["eps"]),
    )
    m = doc["masks"]
    masks = PatchMaskMatrix(values=_f64(m["values"]), binarized=bool(m["binarized"]))
    e = doc["extractor"]
    extractor = ExtractorParams(
        w1=_f64(e["w1"]), b1=_f64(e["b1"]), w2=_f64(e["w2"]), b2=_f64(e["b2"])
    )
    p = doc["prototypes"]
    prototypes = PrototypeSet(
        z=_f64(p["z"]),
        provenance_rows=_i64(p["provenance_rows"]),
        provenance_parts=_i64(p["provenance_parts"]),
        provenance_values=None if p["provenance_values"] is None else _f64(p["provenance_values"]),
        provenance_labels=None if p["provenance_labels"] is None else _i64(p["provenance_labels"]),
        frozen=bool(p["frozen"]),
    )
    h = doc["head"]
    head = ClassifierHead(w=_f64(h["w"]), b=_f64(h["b"]))
    return Model(
        schema=schema,
        binning=binning,
        layout=EncodingLayout.build(schema, binning.n_bins),
        masks=masks,
        extractor=extractor,
        prototypes=prototypes,
        head=head,
        stage=int(stage),
        seed=int(doc["seed"]),
        train_config=doc.get("train_config"),
    )


def save_model(model: Model, path) -> None:
    text = json.dumps(model_to_dict(model), indent=2, sort_keys=True, allow_nan=False)
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text + "\n")
    os.replace(tmp, path)


def load_model(path) -> Model:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ModelError(f"model file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ModelError(f"model file {path} is not valid JSON: {exc}")
    return model_from_dict(doc)
