"""G-mean evaluation, cross-validated runs, and random hyperparameter search.

The g-mean of a c-class confusion matrix is the geometric mean of per-class
recalls, which reduces to sqrt(sensitivity * specificity) for c = 2. Cross
validation refits everything (imputation, standardization, bin geometry) on
each training split only. Random search samples the Table-style space with
log-uniform learning rates and reuses identical folds across trials.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, TrainingError
from .network import Model, forward_batch
from .schema import Dataset, apply_impute, fit_impute_values, stratified_kfold


def confusion_matrix(true: np.ndarray, pred: np.ndarray, n_classes: int) -> np.ndarray:
    """c x c count matrix, rows true class, columns predicted."""
    true = np.asarray(true, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if true.shape != pred.shape:
        raise DataError("label vectors differ in length")
    if true.size and (min(true.min(), pred.min()) < 0 or max(true.max(), pred.max()) >= n_classes):
        raise DataError("label outside [0, n_classes)")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (true, pred), 1)
    return cm


def gmean(cm: np.ndarray) -> float:
    """Geometric mean of per-class recalls; every class row must be populated."""
    cm = np.asarray(cm)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise DataError("confusion matrix must be square")
    row_totals = cm.sum(axis=1)
    if (row_totals == 0).any():
        empty = int(np.flatnonzero(row_totals == 0)[0])
        raise DataError(f"class {empty} has no evaluated instances")
    recalls = np.diag(cm) / row_totals
    if (recalls == 0).any():
        return 0.0
    return float(np.prod(recalls) ** (1.0 / cm.shape[0]))


def per_class_recalls(cm: np.ndarray) -> np.ndarray:
    row_totals = cm.sum(axis=1)
    out = np.full(cm.shape[0], np.nan)
    nz = row_totals > 0
    out[nz] = np.diag(cm)[nz] / row_totals[nz]
    return out


def predict(model: Model, values: np.ndarray) -> np.ndarray:
    """Argmax class per row; probability ties break to the lower index."""
    probs = forward_batch(values, model).probs
    return np.argmax(probs, axis=1).astype(np.int64)


@dataclass
class EvalResult:
    cm: np.ndarray
    recalls: np.ndarray
    gmean: float


def evaluate_model(model: Model, d: Dataset) -> EvalResult:
    pred = predict(model, d.values)
    cm = confusion_matrix(d.labels, pred, model.n_classes)
    return EvalResult(cm=cm, recalls=per_class_recalls(cm), gmean=gmean(cm))


@dataclass
class CVResult:
    fold_gmeans: list[float]
    mean_gmean: float
    fold_cms: list[np.ndarray] = field(default_factory=list)
    fold_models: list[Model] = field(default_factory=list)


def cross_validate(d: Dataset, cfg, k: int, seed: int, keep_models: bool = False) -> CVResult:
    """k-fold scores with all preprocessing fitted on each train split only."""
    from .training import train_full

    splits = stratified_kfold(d, k, seed)
    scores: list[float] = []
    cms: list[np.ndarray] = []
    models: list[Model] = []
    for split in splits:
        train = d.subset(split.train_idx)
        test = d.subset(split.test_idx)
        impute = fit_impute_values(train)
        train = apply_impute(train, impute)
        test = apply_impute(test, impute)
        model = train_full(train, cfg)
        result = evaluate_model(model, test)
        scores.append(result.gmean)
        cms.append(result.cm)
        if keep_models:
            models.append(model)
    return CVResult(
        fold_gmeans=scores,
        mean_gmean=float(np.mean(scores)),
        fold_cms=cms,
        fold_models=models,
    )


@dataclass(frozen=True)
class HyperRange:
    """One searchable hyperparameter: an int range, real range, or choice set."""

    name: str
    kind: str  # int | real | choice
    low: float = 0.0
    high: float = 0.0
    choices: tuple = ()
    scale: str = "linear"  # linear | log

    def __post_init__(self) -> None:
        if self.kind not in ("int", "real", "choice"):
            raise TrainingError(f"unknown hyperparameter kind '{self.kind}'")
        if self.kind == "choice":
            if not self.choices:
                raise TrainingError(f"empty choice set for '{self.name}'")
        elif not self.low < self.high:
            raise TrainingError(f"empty range for '{self.name}'")
        if self.scale == "log" and self.kind != "choice" and self.low <= 0:
            raise TrainingError(f"log scale needs a positive range for '{self.name}'")
        if self.scale not in ("linear", "log"):
            raise TrainingError(f"unknown scale '{self.scale}'")

    def sample(self, rng: np.random.Generator):
        if self.kind == "choice":
            return self.choices[int(rng.integers(0, len(self.choices)))]
        if self.kind == "int":
            return int(rng.integers(int(self.low), int(self.high) + 1))
        if self.scale == "log":
            return float(np.exp(rng.uniform(np.log(self.low), np.log(self.high))))
        return float(rng.uniform(self.low, self.high))


@dataclass(frozen=True)
class SearchSpace:
    params: tuple[HyperRange, ...]

    def __post_init__(self) -> None:
        if not self.params:
            raise TrainingError("empty search space")

    def sample(self, rng: np.random.Generator) -> dict:
        return {p.name: p.sample(rng) for p in self.params}


def default_search_space() -> SearchSpace:
    """Batch size, hidden width, learning rate and prototype count ranges."""
    return SearchSpace(
        params=(
            HyperRange("batch_size", "choice", choices=tuple(range(16, 257, 16))),
            HyperRange("embed_dim", "int", low=2, high=16),
            HyperRange("learning_rate", "real", low=1e-5, high=0.1, scale="log"),
            HyperRange("n_prototypes", "choice", choices=tuple(range(4, 97, 4))),
        )
    )


@dataclass
class TrialResult:
    index: int
    params: dict
    fold_gmeans: list[float]
    mean_gmean: float
    seconds: float
    error: str = ""


@dataclass
class HPOResult:
    best_params: dict
    best_config: object
    best_score: float
    trials: list[TrialResult]


def hpo_random_search(
    space: SearchSpace,
    budget: int,
    d: Dataset,
    k: int,
    seed: int,
    base_cfg=None,
) -> HPOResult:
    """Best-of-budget random search; folds are identical across trials."""
    from .training import TrainConfig

    if budget < 1:
        raise TrainingError(f"trial budget must be >= 1, got {budget}")
    if base_cfg is None:
        base_cfg = TrainConfig()

    rng = np.random.default_rng(seed)
    trials: list[TrialResult] = []
    best: TrialResult | None = None
    best_cfg = None
    for t in range(budget):
        params = space.sample(rng)
        started = time.perf_counter()
        try:
            cfg = replace(base_cfg, **params)
            result = cross_validate(d, cfg, k, seed)
            trial = TrialResult(
                index=t,
                params=params,
                fold_gmeans=result.fold_gmeans,
                mean_gmean=result.mean_gmean,
                seconds=time.perf_counter() - started,
            )
        except (DataError, TrainingError) as exc:
            trial = TrialResult(
                index=t,
                params=params,
                fold_gmeans=[],
                mean_gmean=float("nan"),
                seconds=time.perf_counter() - started,
                error=str(exc),
            )
        trials.append(trial)
        if not trial.error and (best is None or trial.mean_gmean > best.mean_gmean):
            best = trial
            best_cfg = cfg

    if best is None:
        lines = "; ".join(f"trial {t.index}: {t.error}" for t in trials)
        raise TrainingError(f"all {budget} trials failed: {lines}")
    return HPOResult(
        best_params=best.params,
        best_config=best_cfg,
        best_score=best.mean_gmean,
        trials=trials,
    )


def write_trial_log(trials: list[TrialResult], k: int, path) -> None:
    """CSV trial log: trial, params..., fold scores..., mean, wall time."""
    if not trials:
        raise TrainingError("no trials to log")
    param_names = sorted(trials[0].params)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["trial"]
            + param_names
            + [f"fold{i}" for i in range(k)]
            + ["mean_gmean", "seconds", "error"]
        )
        for t in trials:
            folds = [repr(float(s)) for s in t.fold_gmeans]
            folds += [""] * (k - len(folds))
            writer.writerow(
                [t.index]
                + [repr(t.params[n]) if isinstance(t.params[n], float) else t.params[n] for n in param_names]
                + folds
                + [repr(float(t.mean_gmean)), f"{t.seconds:.3f}", t.error]
            )


def write_fold_log(result: CVResult, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fold", "gmean"])
        for i, s in enumerate(result.fold_gmeans):
            writer.writerow([i, repr(float(s))])
        writer.writerow(["mean", repr(float(result.mean_gmean))])
