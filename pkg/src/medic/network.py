"""Prototype-part network: masks, shared extractor, prototypes, linear head.

The forward pass composes encode -> extract_parts -> embed_part (shared
weights across parts) -> prototype_distances -> pool_min -> classify.
Distances are squared L2; pooling takes the minimum over parts per
prototype (ties to the lowest part index); the head consumes the raw pooled
distances, so negative weights express "closer means more likely".
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .backend import kernels as K
from .binning import BinningParams, EncodingLayout, encode_instance, encode_matrix
from .errors import ModelError
from .schema import ROLE_CONTINUOUS, FeatureSchema


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-stabilized softmax over the last axis."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


@dataclass
class PatchMaskMatrix:
    """p x d' patching masks; real-valued until binarization."""

    values: np.ndarray
    binarized: bool = False

    def __post_init__(self) -> None:
        if self.values.ndim != 2:
            raise ModelError("mask matrix must be 2-dimensional")
        if self.binarized:
            self.validate_binary()

    @property
    def n_parts(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def validate_binary(self) -> None:
        v = self.values
        if not np.all((v == 0.0) | (v == 1.0)):
            raise ModelError("binarized masks must contain only 0 or 1")
        if np.any(np.sum(v, axis=1) < 1):
            raise ModelError("binarized mask row with no active entry")

    def copy(self) -> "PatchMaskMatrix":
        return PatchMaskMatrix(self.values.copy(), self.binarized)


@dataclass
class ExtractorParams:
    """Shared shallow MLP d' -> 2h -> h with ReLU after the hidden layer."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self) -> None:
        d, wide = self.w1.shape
        if self.b1.shape != (wide,) or self.w2.shape[0] != wide:
            raise ModelError("extractor hidden shapes disagree")
        if self.b2.shape != (self.w2.shape[1],):
            raise ModelError("extractor output shapes disagree")

    @property
    def in_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[1]

    def apply(self, parts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (pre-activation, hidden, embedding); broadcasts over leading axes."""
        pre = parts @ self.w1 + self.b1
        hid = np.maximum(pre, 0.0)
        emb = hid @ self.w2 + self.b2
        return pre, hid, emb

    def copy(self) -> "ExtractorParams":
        return ExtractorParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())


@dataclass
class PrototypeSet:
    """n x h prototype embeddings with optional projection provenance.

    After projection each prototype records the training row and part it was
    copied from, plus that row's raw feature values and label so a saved
    model can decode itself without the training file.
    """

    z: np.ndarray
    provenance_rows: np.ndarray = field(default=None)  # type: ignore[assignment]
    provenance_parts: np.ndarray = field(default=None)  # type: ignore[assignment]
    provenance_values: np.ndarray | None = None
    provenance_labels: np.ndarray | None = None
    frozen: bool = False

    def __post_init__(self) -> None:
        n = self.z.shape[0]
        if self.provenance_rows is None:
            self.provenance_rows = np.full(n, -1, dtype=np.int64)
        if self.provenance_parts is None:
            self.provenance_parts = np.full(n, -1, dtype=np.int64)

    @property
    def n_prototypes(self) -> int:
        return self.z.shape[0]

    @property
    def has_provenance(self) -> bool:
        return bool(np.all(self.provenance_rows >= 0) and np.all(self.provenance_parts >= 0))

    def copy(self) -> "PrototypeSet":
        return PrototypeSet(
            z=self.z.copy(),
            provenance_rows=self.provenance_rows.copy(),
            provenance_parts=self.provenance_parts.copy(),
            provenance_values=None if self.provenance_values is None else self.provenance_values.copy(),
            provenance_labels=None if self.provenance_labels is None else self.provenance_labels.copy(),
            frozen=self.frozen,
        )


@dataclass
class ClassifierHead:
    """Linear map from the n pooled distances to c class logits."""

    w: np.ndarray  # (c, n)
    b: np.ndarray  # (c,)

    def __post_init__(self) -> None:
        if self.w.ndim != 2 or self.b.shape != (self.w.shape[0],):
            raise ModelError("head weight/bias shapes disagree")

    @property
    def n_classes(self) -> int:
        return self.w.shape[0]

    def logits(self, pooled: np.ndarray) -> np.ndarray:
        return pooled @ self.w.T + self.b

    def copy(self) -> "ClassifierHead":
        return ClassifierHead(self.w.copy(), self.b.copy())


@dataclass
class Model:
    schema: FeatureSchema
    binning: BinningParams
    layout: EncodingLayout
    masks: PatchMaskMatrix
    extractor: ExtractorParams
    prototypes: PrototypeSet
    head: ClassifierHead
    stage: int = 1
    seed: int = 0
    train_config: dict | None = None

    def __post_init__(self) -> None:
        if self.masks.width != self.layout.width:
            raise ModelError("mask width does not match the encoding layout")
        if self.extractor.in_dim != self.layout.width:
            raise ModelError("extractor input width does not match the encoding")
        if self.prototypes.z.shape[1] != self.extractor.out_dim:
            raise ModelError("prototype width does not match the embedding width")
        if self.head.w.shape[1] != self.prototypes.n_prototypes:
            raise ModelError("head width does not match the prototype count")

    @property
    def n_parts(self) -> int:
        return self.masks.n_parts

    @property
    def embed_dim(self) -> int:
        return self.extractor.out_dim

    @property
    def n_prototypes(self) -> int:
        return self.prototypes.n_prototypes

    @property
    def n_classes(self) -> int:
        return self.head.n_classes

    @property
    def encoded_width(self) -> int:
        return self.layout.width

    def copy(self) -> "Model":
        return Model(
            schema=self.schema,
            binning=self.binning.copy(),
            layout=self.layout,
            masks=self.masks.copy(),
            extractor=self.extractor.copy(),
            prototypes=self.prototypes.copy(),
            head=self.head.copy(),
            stage=self.stage,
            seed=self.seed,
            train_config=None if self.train_config is None else dict(self.train_config),
        )


@dataclass
class ForwardTrace:
    """Every intermediate of one instance's forward pass."""

    encoded: np.ndarray  # (d',)
    parts: np.ndarray  # (p, d')
    embeddings: np.ndarray  # (p, h)
    distances: np.ndarray  # (p, n)
    pooled: np.ndarray  # (n,)
    best_part: np.ndarray  # (n,) int64
    logits: np.ndarray  # (c,)
    probs: np.ndarray  # (c,)


@dataclass
class BatchTrace:
    """Batched forward intermediates kept for manual backprop."""

    xs: np.ndarray | None  # (B, F_cont) standardized, None when no continuous
    encoded: np.ndarray  # (B, d')
    parts: np.ndarray  # (B, p, d')
    pre1: np.ndarray  # (B, p, 2h)
    hid1: np.ndarray  # (B, p, 2h)
    embeddings: np.ndarray  # (B, p, h)
    pooled: np.ndarray  # (B, n)
    best_part: np.ndarray  # (B, n) int64
    logits: np.ndarray  # (B, c)
    probs: np.ndarray  # (B, c)


def extract_parts(encoded: np.ndarray, masks: PatchMaskMatrix) -> np.ndarray:
    """Hadamard-project one encoded vector through every mask row."""
    e = np.asarray(encoded, dtype=np.float64)
    if e.shape != (masks.width,):
        raise ModelError(
            f"encoded width {e.shape} does not match mask width {masks.width}"
        )
    return masks.values * e[None, :]


def embed_part(part: np.ndarray, extractor: ExtractorParams) -> np.ndarray:
    part = np.asarray(part, dtype=np.float64)
    if part.shape[-1] != extractor.in_dim:
        raise ModelError("part width does not match the extractor input")
    return extractor.apply(part)[2]


def prototype_distances(embeddings: np.ndarray, prototypes: PrototypeSet) -> np.ndarray:
    emb = np.ascontiguousarray(embeddings, dtype=np.float64)
    if emb.shape[-1] != prototypes.z.shape[1]:
        raise ModelError("embedding width does not match the prototype width")
    return K.pairwise_sqdist(emb, prototypes.z)


def pool_min(distances: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = np.asarray(distances, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] < 1:
        raise ModelError("distance matrix must be (parts, prototypes) with parts >= 1")
    best = np.argmin(d, axis=0)
    pooled = d[best, np.arange(d.shape[1])]
    return pooled, best.astype(np.int64)


def classify(pooled: np.ndarray, head: ClassifierHead) -> np.ndarray:
    return softmax(head.logits(np.asarray(pooled, dtype=np.float64)))


def forward(row: np.ndarray, model: Model) -> ForwardTrace:
    """Full single-instance pass; the trace is the explanation substrate."""
    enc = encode_instance(row, model.schema, model.binning, model.layout).vector
    parts = extract_parts(enc, model.masks)
    embeddings = model.extractor.apply(parts)[2]
    distances = prototype_distances(embeddings, model.prototypes)
    pooled, best = pool_min(distances)
    logits = model.head.logits(pooled)
    probs = softmax(logits)
    return ForwardTrace(
        encoded=enc,
        parts=parts,
        embeddings=embeddings,
        distances=distances,
        pooled=pooled,
        best_part=best,
        logits=logits,
        probs=probs,
    )


def forward_batch(values: np.ndarray, model: Model) -> BatchTrace:
    """Vectorized pass over a (rows, features) value matrix."""
    enc = encode_matrix(values, model.schema, model.binning, model.layout)
    cont_cols = [
        j for j, role in enumerate(model.schema.feature_roles) if role == ROLE_CONTINUOUS
    ]
    xs = None
    if cont_cols:
        xs = np.ascontiguousarray(
            model.binning.standardize(np.asarray(values, dtype=np.float64)[:, cont_cols])
        )
    parts = K.masked_parts(enc, model.masks.values)
    pre1, hid1, emb = model.extractor.apply(parts)
    pooled, best = K.min_pool_distances(np.ascontiguousarray(emb), model.prototypes.z)
    logits = model.head.logits(pooled)
    probs = softmax(logits)
    return BatchTrace(
        xs=xs,
        encoded=enc,
        parts=parts,
        pre1=pre1,
        hid1=hid1,
        embeddings=emb,
        pooled=pooled,
        best_part=best,
        logits=logits,
        probs=probs,
    )


def init_model(
    schema: FeatureSchema,
    binning: BinningParams,
    n_parts: int,
    embed_dim: int,
    n_prototypes: int,
    seed: int,
    train_config: dict | None = None,
) -> Model:
    """Fresh stage-1 model: uniform masks, He extractor, 0.1-scale prototypes."""
    if min(n_parts, embed_dim, n_prototypes) < 1:
        raise ModelError("n_parts, embed_dim and n_prototypes must be >= 1")
    layout = EncodingLayout.build(schema, binning.n_bins)
    d = layout.width
    c = schema.n_classes
    wide = 2 * embed_dim
    rng = np.random.default_rng(seed)
    masks = PatchMaskMatrix(rng.uniform(0.0, 1.0, size=(n_parts, d)))
    extractor = ExtractorParams(
        w1=rng.normal(0.0, np.sqrt(2.0 / d), size=(d, wide)),
        b1=np.zeros(wide),
        w2=rng.normal(0.0, np.sqrt(2.0 / wide), size=(wide, embed_dim)),
        b2=np.zeros(embed_dim),
    )
    prototypes = PrototypeSet(z=rng.normal(0.0, 0.1, size=(n_prototypes, embed_dim)))
    head = ClassifierHead(
        w=rng.normal(0.0, 0.1, size=(c, n_prototypes)), b=np.zeros(c)
    )
    return Model(
        schema=schema,
        binning=binning,
        layout=layout,
        masks=masks,
        extractor=extractor,
        prototypes=prototypes,
        head=head,
        stage=1,
        seed=seed,
        train_config=train_config,
    )
