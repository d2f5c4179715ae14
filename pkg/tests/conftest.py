"""Shared fixtures and real-dataset discovery for the test suite.

The Cirrhosis/CKD/Diabetes tests need the prepared CSVs under ``data/`` at
the repository root (or ``$MEDIC_DATA_DIR``). When a file is absent the
dependent tests skip with instructions; run ``scripts/fetch_data.py`` on a
machine with internet access to materialize them.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import pytest

from medic.schema import Dataset, load_dataset
from medic.synthetic import make_synthetic

REPO_ROOT = Path(__file__).resolve().parents[1]

DATASET_SPECS = {
    "cirrhosis": {
        "csv": "cirrhosis.csv",
        "schema": {
            "target": "Status",
            "continuous": [
                "Age", "Bilirubin", "Cholesterol", "Albumin", "Copper",
                "Alk_Phos", "SGOT", "Tryglicerides", "Platelets", "Prothrombin",
            ],
            "categorical": [
                "Drug", "Sex", "Ascites", "Hepatomegaly", "Spiders", "Edema", "Stage",
            ],
        },
    },
    "ckd": {
        "csv": "ckd.csv",
        "schema": {
            "target": "class",
            "continuous": [
                "age", "bp", "bgr", "bu", "sc", "sod", "pot", "hemo", "pcv", "wc", "rc",
            ],
            "categorical": [
                "sg", "al", "su", "rbc", "pc", "pcc", "ba", "htn", "dm", "cad",
                "appet", "pe", "ane",
            ],
        },
    },
    "diabetes": {
        "csv": "diabetes.csv",
        "schema": {
            "target": "Outcome",
            "continuous": [
                "Pregnancies", "Glucose", "BloodPressure", "SkinThickness",
                "Insulin", "BMI", "DiabetesPedigreeFunction", "Age",
            ],
            "categorical": [],
        },
    },
}


def data_dir() -> Path:
    return Path(os.environ.get("MEDIC_DATA_DIR", REPO_ROOT / "data"))


def dataset_path(name: str) -> Path:
    return data_dir() / DATASET_SPECS[name]["csv"]


def require_dataset(name: str) -> Dataset:
    """Load a real dataset or skip with fetch instructions."""
    path = dataset_path(name)
    if not path.exists():
        pytest.skip(
            f"{name} dataset not found at {path}; run scripts/fetch_data.py "
            "on a machine with internet access (UCI archive is unreachable here)"
        )
    return load_dataset(path, DATASET_SPECS[name]["schema"])


@pytest.fixture(scope="session")
def tiny_ds() -> Dataset:
    """Small learnable mixed-type dataset, fully observed."""
    return make_synthetic(rows=90, n_classes=2, n_continuous=3, n_categorical=1, seed=13)


@pytest.fixture(scope="session")
def trained_model(tiny_ds):
    """One stage-3 model shared by read-only tests."""
    from medic.training import TrainConfig, train_full

    cfg = TrainConfig(
        max_epochs=(25, 10, 8), n_parts=4, embed_dim=5, n_prototypes=8,
        batch_size=16, seed=3,
    )
    return train_full(tiny_ds, cfg)


def rel_err_ok(analytic: np.ndarray, numeric: np.ndarray,
               rel: float = 1e-4, floor: float = 1e-7) -> bool:
    """Gradcheck criterion: relative error < rel, with an absolute floor."""
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(numeric, dtype=np.float64)
    diff = np.abs(a - b)
    return bool(np.all((diff < rel * np.maximum(np.abs(a), np.abs(b))) | (diff < floor)))


def fd_gradcheck(model, values, labels, cfg, trainables, class_weights=None,
                 step: float = 1e-6, rel: float = 1e-4, floor: float = 1e-7) -> dict:
    """Central-difference oracle for loss_and_grads.

    Perturbs every entry of every requested parameter array and compares the
    numeric slope of the total loss against the analytic gradient. Returns a
    {param_name: max_abs_error} dict of failures; empty means all pass.
    """
    from medic.training import _param_arrays, loss_and_grads, loss_total

    _, grads = loss_and_grads(model, values, labels, cfg, class_weights, trainables)
    params = _param_arrays(model)
    failures: dict[str, float] = {}
    for name in sorted(grads):
        arr = params[name]
        num = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            ix = it.multi_index
            orig = arr[ix]
            arr[ix] = orig + step
            up = loss_total(model, values, labels, cfg, class_weights).total
            arr[ix] = orig - step
            dn = loss_total(model, values, labels, cfg, class_weights).total
            arr[ix] = orig
            num[ix] = (up - dn) / (2.0 * step)
        if not rel_err_ok(grads[name], num, rel, floor):
            failures[name] = float(np.max(np.abs(grads[name] - num)))
    return failures
