"""Objective and three-stage training procedure.

Stage 1 trains everything end to end in fuzzy binning mode. Stage 2
binarizes the masks, switches to hard binning, freezes bin geometry and
masks, and fine-tunes the rest; gradients stop at the discretized
encodings. Stage 3 projects each prototype onto its nearest training part
embedding (recording provenance) and fine-tunes only the head.

The loss is weighted mean cross-entropy plus an L1 mask-sparsity term and a
negative mean pairwise prototype-distance diversity term. All gradients are
computed manually; correctness is pinned by finite-difference tests.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field, fields

import numpy as np

from .backend import kernels as K
from .binning import MODE_FUZZY, MODE_HARD, init_binning, sigmoid
from .errors import DataError, ModelError, TrainingError
from .evaluate import confusion_matrix, gmean, predict
from .network import BatchTrace, Model, forward_batch, init_model
from .schema import ROLE_CONTINUOUS, Dataset, stratified_kfold

PARAM_NAMES = (
    "centers",
    "rho",
    "masks",
    "w1",
    "b1",
    "w2",
    "b2",
    "z",
    "head_w",
    "head_b",
)

STAGE1_TRAINABLE = frozenset(PARAM_NAMES)
STAGE2_TRAINABLE = frozenset({"w1", "b1", "w2", "b2", "z", "head_w", "head_b"})
STAGE3_TRAINABLE = frozenset({"head_w", "head_b"})


class TrainingWarning(UserWarning):
    """Recoverable training-setup adjustments (clamped batch size etc.)."""


@dataclass
class TrainConfig:
    lambda_sparsity: float = 0.3
    lambda_diversity: float = 0.05
    learning_rate: float = 5e-3
    batch_size: int = 32
    max_epochs: tuple[int, int, int] = (500, 100, 50)
    patience: int = 20
    seed: int = 0
    n_bins: int = 3
    n_parts: int = 8
    embed_dim: int = 8
    n_prototypes: int = 32
    class_weighted: bool = True

    def __post_init__(self) -> None:
        if self.lambda_sparsity < 0 or self.lambda_diversity < 0:
            raise TrainingError("regularization strengths must be >= 0")
        if self.learning_rate <= 0:
            raise TrainingError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise TrainingError("batch_size must be >= 1")
        if len(self.max_epochs) != 3 or min(self.max_epochs) < 1:
            raise TrainingError("max_epochs must be three positive integers")
        if self.patience < 1:
            raise TrainingError("patience must be >= 1")
        if min(self.n_bins, self.n_parts, self.embed_dim, self.n_prototypes) < 1:
            raise TrainingError("architecture sizes must be >= 1")

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise TrainingError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(d)
        if "max_epochs" in kwargs:
            kwargs["max_epochs"] = tuple(int(v) for v in kwargs["max_epochs"])
        return cls(**kwargs)


@dataclass
class LossBreakdown:
    ce: float
    sparsity: float
    diversity: float
    total: float

    def check_finite(self, context: str) -> None:
        for name in ("ce", "sparsity", "diversity", "total"):
            if not np.isfinite(getattr(self, name)):
                raise TrainingError(f"non-finite {name} loss {context}")


@dataclass
class EpochLog:
    """Per-epoch metrics, one row per epoch across all stages."""

    rows: list[dict] = field(default_factory=list)

    COLUMNS = ("epoch", "stage", "ce", "sparsity", "diversity", "total", "val_gmean")

    def append(self, epoch: int, stage: int, loss: LossBreakdown, val_gmean: float) -> None:
        self.rows.append(
            {
                "epoch": epoch,
                "stage": stage,
                "ce": loss.ce,
                "sparsity": loss.sparsity,
                "diversity": loss.diversity,
                "total": loss.total,
                "val_gmean": val_gmean,
            }
        )

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.COLUMNS)
            for row in self.rows:
                writer.writerow(
                    [row["epoch"], row["stage"]]
                    + [repr(float(row[c])) for c in self.COLUMNS[2:]]
                )


def class_weights_for(d: Dataset, cfg: TrainConfig) -> np.ndarray:
    """Inverse-class-frequency weights (balanced), or ones when disabled."""
    c = d.schema.n_classes
    if not cfg.class_weighted:
        return np.ones(c, dtype=np.float64)
    counts = d.class_counts().astype(np.float64)
    if (counts == 0).any():
        raise DataError(f"class {int(np.argmin(counts))} has no training instances")
    return d.rows / (c * counts)


def _diversity_value(z: np.ndarray, lam: float) -> float:
    n = z.shape[0]
    if lam == 0.0:
        return 0.0
    if n < 2:
        warnings.warn("diversity needs >= 2 prototypes; term set to 0", TrainingWarning)
        return 0.0
    diff = z[:, None, :] - z[None, :, :]
    norms = np.sqrt(np.sum(diff * diff, axis=2))
    return float(-lam * norms.sum() / (n * (n - 1)))


def _diversity_grad(z: np.ndarray, lam: float) -> np.ndarray:
    n = z.shape[0]
    diff = z[:, None, :] - z[None, :, :]
    norms = np.sqrt(np.sum(diff * diff, axis=2))
    inv = np.zeros_like(norms)
    nz = norms > 0.0
    inv[nz] = 1.0 / norms[nz]
    # d(-lam/(n(n-1)) * sum_{i!=j} ||z_i-z_j||)/dz_a = -lam/(n(n-1)) * 2*sum_{j!=a}(z_a-z_j)/||.||
    return -lam / (n * (n - 1)) * 2.0 * np.einsum("ij,ijm->im", inv, diff)


def _ce_value(trace: BatchTrace, labels: np.ndarray, sample_w: np.ndarray) -> float:
    b = labels.shape[0]
    picked = np.clip(trace.probs[np.arange(b), labels], 1e-300, None)
    return float(np.sum(sample_w * -np.log(picked)) / np.sum(sample_w))


def loss_total(
    model: Model,
    values: np.ndarray,
    labels: np.ndarray,
    cfg: TrainConfig,
    class_weights: np.ndarray | None = None,
) -> LossBreakdown:
    """Cross-entropy + mask sparsity + prototype diversity on one batch."""
    if values.shape[0] == 0:
        raise TrainingError("empty batch")
    trace = forward_batch(values, model)
    return _loss_from_trace(trace, model, labels, cfg, class_weights)


def _loss_from_trace(
    trace: BatchTrace,
    model: Model,
    labels: np.ndarray,
    cfg: TrainConfig,
    class_weights: np.ndarray | None,
) -> LossBreakdown:
    b = labels.shape[0]
    sample_w = (
        np.ones(b, dtype=np.float64) if class_weights is None else class_weights[labels]
    )
    ce = _ce_value(trace, labels, sample_w)
    sparsity = float(cfg.lambda_sparsity * np.mean(np.abs(model.masks.values)))
    diversity = _diversity_value(model.prototypes.z, cfg.lambda_diversity)
    return LossBreakdown(ce, sparsity, diversity, ce + sparsity + diversity)


def loss_and_grads(
    model: Model,
    values: np.ndarray,
    labels: np.ndarray,
    cfg: TrainConfig,
    class_weights: np.ndarray | None = None,
    trainables: frozenset[str] = STAGE1_TRAINABLE,
) -> tuple[LossBreakdown, dict[str, np.ndarray]]:
    """Loss plus manual gradients for the requested parameter names."""
    if values.shape[0] == 0:
        raise TrainingError("empty batch")
    trace = forward_batch(values, model)
    loss = _loss_from_trace(trace, model, labels, cfg, class_weights)

    b = labels.shape[0]
    p, d = model.masks.values.shape
    sample_w = (
        np.ones(b, dtype=np.float64) if class_weights is None else class_weights[labels]
    )
    frac = sample_w / np.sum(sample_w)

    grads: dict[str, np.ndarray] = {}

    # cross-entropy through the softmax head
    glogits = trace.probs.copy()
    glogits[np.arange(b), labels] -= 1.0
    glogits *= frac[:, None]
    if "head_w" in trainables:
        grads["head_w"] = glogits.T @ trace.pooled
    if "head_b" in trainables:
        grads["head_b"] = np.sum(glogits, axis=0)

    below_head = trainables - {"head_w", "head_b"}
    if below_head:
        gpooled = glogits @ model.head.w
        gemb, gz_ce = K.min_pool_distances_grad(
            np.ascontiguousarray(trace.embeddings),
            model.prototypes.z,
            trace.best_part,
            gpooled,
        )
        if "z" in trainables:
            gz = gz_ce
            if cfg.lambda_diversity > 0.0 and model.n_prototypes >= 2:
                gz = gz + _diversity_grad(model.prototypes.z, cfg.lambda_diversity)
            grads["z"] = gz

    below_protos = trainables - {"head_w", "head_b", "z"}
    if below_protos:
        wide = model.extractor.b1.shape[0]
        h = model.embed_dim
        if "w2" in trainables:
            grads["w2"] = trace.hid1.reshape(-1, wide).T @ gemb.reshape(-1, h)
        if "b2" in trainables:
            grads["b2"] = np.sum(gemb, axis=(0, 1))
        gpre = (gemb @ model.extractor.w2.T) * (trace.pre1 > 0.0)
        if "w1" in trainables:
            grads["w1"] = trace.parts.reshape(-1, d).T @ gpre.reshape(-1, wide)
        if "b1" in trainables:
            grads["b1"] = np.sum(gpre, axis=(0, 1))

    below_extractor = trainables & {"masks", "centers", "rho"}
    if below_extractor:
        gparts = gpre @ model.extractor.w1.T
        genc, gmask_ce = K.masked_parts_grad(trace.encoded, model.masks.values, gparts)
        if "masks" in trainables:
            grads["masks"] = gmask_ce + (
                cfg.lambda_sparsity / (p * d) * np.sign(model.masks.values)
            )
        if ("centers" in trainables or "rho" in trainables) and trace.xs is not None:
            if model.binning.mode != MODE_FUZZY:
                raise TrainingError("binning gradients require fuzzy mode")
            fcont = trace.xs.shape[1]
            kbins = model.binning.n_bins
            gw = np.zeros((b, fcont, kbins), dtype=np.float64)
            for seg in model.layout.segments:
                if seg.kind == ROLE_CONTINUOUS:
                    gw[:, seg.cont_index, :] = genc[:, seg.start : seg.stop]
            gcenters, gsigma = K.fuzzy_weights_grad(
                trace.xs,
                model.binning.centers,
                model.binning.sigma,
                model.binning.eps,
                gw,
            )
            if "centers" in trainables:
                grads["centers"] = gcenters
            if "rho" in trainables:
                grads["rho"] = gsigma * sigmoid(model.binning.rho)

    return loss, grads


def _param_arrays(model: Model) -> dict[str, np.ndarray]:
    return {
        "centers": model.binning.centers,
        "rho": model.binning.rho,
        "masks": model.masks.values,
        "w1": model.extractor.w1,
        "b1": model.extractor.b1,
        "w2": model.extractor.w2,
        "b2": model.extractor.b2,
        "z": model.prototypes.z,
        "head_w": model.head.w,
        "head_b": model.head.b,
    }


class Adam:
    """Per-parameter adaptive updates with bias-corrected moments."""

    def __init__(self, names: frozenset[str], shapes: dict[str, tuple],
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
        self.names = tuple(n for n in PARAM_NAMES if n in names)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {n: np.zeros(shapes[n]) for n in self.names}
        self.v = {n: np.zeros(shapes[n]) for n in self.names}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
             lr: float) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for n in self.names:
            g = grads[n]
            self.m[n] = self.beta1 * self.m[n] + (1.0 - self.beta1) * g
            self.v[n] = self.beta2 * self.v[n] + (1.0 - self.beta2) * g * g
            params[n] -= lr * (self.m[n] / b1c) / (np.sqrt(self.v[n] / b2c) + self.eps)


def split_validation(d: Dataset, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """20% stratified carve-out for early stopping; tiny sets validate on train."""
    if d.rows < 5:
        warnings.warn("fewer than 5 rows; validating on the training set", TrainingWarning)
        idx = np.arange(d.rows, dtype=np.int64)
        return idx, idx.copy()
    split = stratified_kfold(d, 5, seed)[0]
    return split.train_idx, split.test_idx


def _val_gmean(model: Model, values: np.ndarray, labels: np.ndarray) -> float:
    pred = predict(model, values)
    cm = confusion_matrix(labels, pred, model.n_classes)
    try:
        return gmean(cm)
    except DataError:
        return float("nan")


def _snapshot(model: Model) -> dict[str, np.ndarray]:
    return {k: v.copy() for k, v in _param_arrays(model).items()}


def _restore(model: Model, snap: dict[str, np.ndarray]) -> None:
    for k, v in _param_arrays(model).items():
        v[...] = snap[k]


def _run_stage(
    model: Model,
    d: Dataset,
    stage: int,
    trainables: frozenset[str],
    max_epochs: int,
    cfg: TrainConfig,
    class_weights: np.ndarray,
    log: EpochLog,
) -> None:
    train_idx, val_idx = split_validation(d, cfg.seed)
    train_vals = d.values[train_idx]
    train_labels = d.labels[train_idx]
    val_vals = d.values[val_idx]
    val_labels = d.labels[val_idx]

    batch = cfg.batch_size
    if batch > train_idx.size:
        warnings.warn(
            f"batch_size {batch} exceeds {train_idx.size} training rows; clamped",
            TrainingWarning,
        )
        batch = train_idx.size

    params = _param_arrays(model)
    opt = Adam(trainables, {k: v.shape for k, v in params.items()})
    rng = np.random.default_rng(cfg.seed + 1000 * stage)

    best_val = np.inf
    best_snap = _snapshot(model)
    stall = 0

    for epoch in range(1, max_epochs + 1):
        order = rng.permutation(train_idx.size)
        for start in range(0, order.size, batch):
            sel = order[start : start + batch]
            loss, grads = loss_and_grads(
                model, train_vals[sel], train_labels[sel], cfg, class_weights, trainables
            )
            loss.check_finite(f"(stage {stage}, epoch {epoch})")
            opt.step(params, grads, cfg.learning_rate)

        train_loss = loss_total(model, train_vals, train_labels, cfg, class_weights)
        train_loss.check_finite(f"(stage {stage}, epoch {epoch}, train eval)")
        val_loss = loss_total(model, val_vals, val_labels, cfg, class_weights)
        val_loss.check_finite(f"(stage {stage}, epoch {epoch}, val eval)")
        log.append(epoch, stage, train_loss, _val_gmean(model, val_vals, val_labels))

        if val_loss.total < best_val:
            best_val = val_loss.total
            best_snap = _snapshot(model)
            stall = 0
        else:
            stall += 1
            if stall >= cfg.patience:
                break

    _restore(model, best_snap)


def binarize_masks(m: np.ndarray) -> np.ndarray:
    """Per-row threshold at half the max |entry|; dead rows keep their peak."""
    m = np.asarray(m, dtype=np.float64)
    absm = np.abs(m)
    tau = 0.5 * np.max(absm, axis=1, keepdims=True)
    out = (absm >= tau).astype(np.float64)
    dead = tau[:, 0] == 0.0
    if np.any(dead):
        out[dead] = 0.0
        out[np.flatnonzero(dead), np.argmax(absm[dead], axis=1)] = 1.0
    return out


def train_stage1(d: Dataset, cfg: TrainConfig, log: EpochLog | None = None) -> Model:
    """End-to-end fuzzy training of a freshly initialized model."""
    if d.has_missing():
        raise DataError("dataset has missing cells; impute before training")
    log = log if log is not None else EpochLog()
    binning = init_binning(d, cfg.n_bins)
    model = init_model(
        d.schema,
        binning,
        cfg.n_parts,
        cfg.embed_dim,
        cfg.n_prototypes,
        cfg.seed,
        train_config=cfg.to_dict(),
    )
    weights = class_weights_for(d, cfg)
    _run_stage(model, d, 1, STAGE1_TRAINABLE, cfg.max_epochs[0], cfg, weights, log)
    return model


def enter_stage2(model: Model) -> Model:
    """Binarize masks and switch to hard binning; geometry freezes here."""
    if model.stage != 1:
        raise ModelError(f"stage 2 entry requires a stage-1 model, got {model.stage}")
    model.masks.values = binarize_masks(model.masks.values)
    model.masks.binarized = True
    model.masks.validate_binary()
    model.binning.mode = MODE_HARD
    model.stage = 2
    return model


def train_stage2(d: Dataset, model: Model, cfg: TrainConfig, log: EpochLog | None = None) -> Model:
    """Fine-tune extractor, prototypes and head on discretized inputs."""
    if model.stage != 2:
        raise ModelError("train_stage2 requires enter_stage2 first")
    if not model.masks.binarized or model.binning.mode != MODE_HARD:
        raise ModelError("stage 2 requires binary masks and hard binning")
    log = log if log is not None else EpochLog()
    weights = class_weights_for(d, cfg)
    _run_stage(model, d, 2, STAGE2_TRAINABLE, cfg.max_epochs[1], cfg, weights, log)
    return model


def project_prototypes(d: Dataset, model: Model) -> Model:
    """Copy each prototype's nearest training part embedding over it.

    Ties break row-major (lowest row, then lowest part), which makes the
    projection idempotent: once z_j is a training embedding, the first
    zero-distance hit is its own source.
    """
    if d.rows == 0:
        raise DataError("cannot project prototypes on an empty training set")
    trace = forward_batch(d.values, model)
    b, p, h = trace.embeddings.shape
    flat = np.ascontiguousarray(trace.embeddings.reshape(b * p, h))
    dist = K.pairwise_sqdist(flat, model.prototypes.z)  # (B*P, n)
    nearest = np.argmin(dist, axis=0)
    rows = (nearest // p).astype(np.int64)
    parts = (nearest % p).astype(np.int64)
    model.prototypes.z = flat[nearest].copy()
    model.prototypes.provenance_rows = rows
    model.prototypes.provenance_parts = parts
    model.prototypes.provenance_values = d.values[rows].copy()
    model.prototypes.provenance_labels = d.labels[rows].copy()
    return model


def enter_stage3(d: Dataset, model: Model) -> Model:
    if model.stage != 2:
        raise ModelError(f"stage 3 entry requires a stage-2 model, got {model.stage}")
    project_prototypes(d, model)
    model.prototypes.frozen = True
    model.stage = 3
    return model


def train_stage3(d: Dataset, model: Model, cfg: TrainConfig, log: EpochLog | None = None) -> Model:
    """Head-only fine-tuning after prototype projection."""
    if model.stage != 3 or not model.prototypes.has_provenance:
        raise ModelError("train_stage3 requires projected stage-3 prototypes")
    log = log if log is not None else EpochLog()
    weights = class_weights_for(d, cfg)
    _run_stage(model, d, 3, STAGE3_TRAINABLE, cfg.max_epochs[2], cfg, weights, log)
    return model


def train_full(d: Dataset, cfg: TrainConfig, log: EpochLog | None = None) -> Model:
    """Run all three stages and return the final stage-3 model."""
    log = log if log is not None else EpochLog()
    model = train_stage1(d, cfg, log)
    enter_stage2(model)
    train_stage2(d, model, cfg, log)
    enter_stage3(d, model)
    train_stage3(d, model, cfg, log)
    return model


def count_unique_prototypes(model: Model) -> int:
    """Distinct provenance (row, part) pairs across all prototypes."""
    pr = model.prototypes
    if not pr.has_provenance:
        raise ModelError("stage 3 required: prototypes have no provenance")
    pairs = {(int(r), int(p)) for r, p in zip(pr.provenance_rows, pr.provenance_parts)}
    return len(pairs)
