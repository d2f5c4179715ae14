"""Learnable discretization of continuous features.

Each continuous feature owns K trainable bin centers (in standardized units)
and one trainable bandwidth. In fuzzy mode a value is softly assigned to all
K bins through a Gaussian kernel followed by a stabilized softmax; in hard
mode it is one-hot assigned to the nearest center, which is equivalent to
membership in the half-open intervals bounded by consecutive-center
midpoints. Encoded instances concatenate the per-feature bin vectors with
one-hot categorical segments, in schema column order.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .backend import kernels as K
from .errors import DataError, ModelError
from .schema import ROLE_CATEGORICAL, ROLE_CONTINUOUS, Dataset, FeatureSchema

MODE_FUZZY = "fuzzy"
MODE_HARD = "hard"

DUPLICATE_CENTER_GAP = 1e-9


class BinningWarning(UserWarning):
    """Degenerate binning geometry (collapsed or duplicate centers)."""


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


def inv_softplus(y):
    y = np.asarray(y, dtype=np.float64)
    return np.where(y > 30.0, y, np.log(np.expm1(np.minimum(y, 30.0))))


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class BinningParams:
    """Trainable discretization state for all continuous features.

    ``centers`` is (F, K) in standardized units; the positive bandwidth is
    stored through its unconstrained preimage ``rho`` with
    sigma = softplus(rho), one scalar per feature. ``mean``/``scale`` hold
    the standardization fitted on training data and are frozen after init.
    """

    centers: np.ndarray
    rho: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    mode: str = MODE_FUZZY
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.mode not in (MODE_FUZZY, MODE_HARD):
            raise ModelError(f"unknown binning mode '{self.mode}'")
        if self.centers.ndim != 2:
            raise ModelError("centers must be a (features, bins) matrix")
        if np.any(self.scale <= 0):
            raise ModelError("standardization scale must be positive")

    @property
    def n_features(self) -> int:
        return self.centers.shape[0]

    @property
    def n_bins(self) -> int:
        return self.centers.shape[1]

    @property
    def sigma(self) -> np.ndarray:
        return softplus(self.rho)

    def standardize(self, raw: np.ndarray) -> np.ndarray:
        return (raw - self.mean) / self.scale

    def copy(self) -> "BinningParams":
        return BinningParams(
            centers=self.centers.copy(),
            rho=self.rho.copy(),
            mean=self.mean.copy(),
            scale=self.scale.copy(),
            mode=self.mode,
            eps=self.eps,
        )


@dataclass(frozen=True)
class Interval:
    """Half-open interval [lower, upper) in original feature units."""

    lower: float
    upper: float

    def __post_init__(self) -> None:
        if not self.lower < self.upper:
            raise ModelError(f"empty interval [{self.lower}, {self.upper})")

    def contains(self, x: float) -> bool:
        return self.lower <= x < self.upper

    def format(self, precision: int = 6, infinity: str = "inf") -> str:
        def end(v: float) -> str:
            if np.isinf(v):
                return ("-" if v < 0 else "") + infinity
            return f"{v:.{precision}g}"

        left = "(" if np.isinf(self.lower) else "["
        return f"{left}{end(self.lower)}, {end(self.upper)})"


@dataclass(frozen=True)
class Segment:
    """One feature's span of slots inside the encoded vector."""

    feature: str
    kind: str
    start: int
    stop: int
    cont_index: int = -1
    categories: tuple[str, ...] = ()

    @property
    def width(self) -> int:
        return self.stop - self.start


@dataclass(frozen=True)
class EncodingLayout:
    segments: tuple[Segment, ...]
    width: int

    @classmethod
    def build(cls, schema: FeatureSchema, n_bins: int) -> "EncodingLayout":
        segments = []
        cursor = 0
        cont = 0
        for name, role in zip(schema.feature_columns, schema.feature_roles):
            if role == ROLE_CONTINUOUS:
                segments.append(Segment(name, ROLE_CONTINUOUS, cursor, cursor + n_bins, cont))
                cursor += n_bins
                cont += 1
            else:
                vocab = tuple(schema.category_vocab[name])
                segments.append(Segment(name, ROLE_CATEGORICAL, cursor, cursor + len(vocab), -1, vocab))
                cursor += len(vocab)
        return cls(segments=tuple(segments), width=cursor)

    def segment_for(self, feature: str) -> Segment:
        for seg in self.segments:
            if seg.feature == feature:
                return seg
        raise ModelError(f"feature '{feature}' not in encoding layout")


@dataclass
class EncodedInstance:
    vector: np.ndarray
    layout: EncodingLayout


def fuzzy_bin(x: float, centers: np.ndarray, sigma: float, eps: float = 1e-8) -> np.ndarray:
    """Soft memberships of a scalar across K bins; sums to 1 up to eps slack."""
    if not np.isfinite(x):
        raise DataError(f"non-finite value {x!r} cannot be binned")
    xs = np.array([[float(x)]], dtype=np.float64)
    w = K.fuzzy_weights(xs, np.asarray(centers, dtype=np.float64).reshape(1, -1),
                        np.array([float(sigma)]), float(eps))
    return w[0, 0]


def hard_bin(x: float, centers: np.ndarray) -> np.ndarray:
    """One-hot assignment of a scalar to its nearest center."""
    if not np.isfinite(x):
        raise DataError(f"non-finite value {x!r} cannot be binned")
    centers = np.asarray(centers, dtype=np.float64).reshape(1, -1)
    if centers.size == 0:
        raise ModelError("hard_bin requires at least one center")
    idx = K.hard_assign(np.array([[float(x)]], dtype=np.float64), centers)[0, 0]
    out = np.zeros(centers.shape[1], dtype=np.float64)
    out[idx] = 1.0
    return out


def _merged_center_groups(centers: np.ndarray) -> tuple[np.ndarray, list[float], np.ndarray]:
    order = np.argsort(centers, kind="stable")
    groups: list[float] = []
    members: list[list[int]] = []
    for slot in order:
        c = float(centers[slot])
        if groups and c - groups[-1] < DUPLICATE_CENTER_GAP:
            members[-1].append(int(slot))
            groups[-1] = float(np.mean([centers[s] for s in members[-1]]))
        else:
            groups.append(c)
            members.append([int(slot)])
    slot_map = np.empty(len(centers), dtype=np.int64)
    for g, slots in enumerate(members):
        for s in slots:
            slot_map[s] = g
    return order, groups, slot_map


def intervals_from_centers(
    centers: np.ndarray, mean: float = 0.0, scale: float = 1.0
) -> list[Interval]:
    """Half-open intervals bounded by consecutive-center midpoints.

    Centers are sorted first; centers closer than 1e-9 are merged into one
    interval with a warning. Boundaries are mapped back to original units
    through the stored standardization.
    """
    centers = np.asarray(centers, dtype=np.float64).ravel()
    if centers.size == 0:
        raise ModelError("intervals require at least one center")
    if not np.all(np.isfinite(centers)):
        raise ModelError("non-finite bin center")
    _, groups, slot_map = _merged_center_groups(centers)
    if len(groups) < centers.size:
        warnings.warn("duplicate bin centers merged into a single interval", BinningWarning)
    bounds = [-np.inf]
    for a, b in zip(groups[:-1], groups[1:]):
        bounds.append(mean + scale * (a + b) / 2.0)
    bounds.append(np.inf)
    return [Interval(bounds[i], bounds[i + 1]) for i in range(len(groups))]


def feature_intervals(params: BinningParams, cont_index: int) -> tuple[list[Interval], np.ndarray]:
    """Intervals for one continuous feature plus the bin-slot-to-interval map.

    The map is needed because duplicate centers collapse into one interval:
    slot k of the stored (unsorted) centers points at the merged interval
    that contains it.
    """
    centers = params.centers[cont_index]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BinningWarning)
        intervals = intervals_from_centers(
            centers, float(params.mean[cont_index]), float(params.scale[cont_index])
        )
    _, _, slot_map = _merged_center_groups(centers)
    return intervals, slot_map


def encode_matrix(values: np.ndarray, schema: FeatureSchema, params: BinningParams,
                  layout: EncodingLayout | None = None) -> np.ndarray:
    """Encode a (rows, features) value matrix into (rows, d') vectors."""
    if layout is None:
        layout = EncodingLayout.build(schema, params.n_bins)
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != len(schema.feature_columns):
        raise DataError("value matrix does not match the schema's feature columns")

    cont_cols = [j for j, role in enumerate(schema.feature_roles) if role == ROLE_CONTINUOUS]
    out = np.zeros((values.shape[0], layout.width), dtype=np.float64)

    if cont_cols:
        raw = values[:, cont_cols]
        if not np.all(np.isfinite(raw)):
            bad = np.argwhere(~np.isfinite(raw))[0]
            name = schema.continuous_columns[bad[1]]
            raise DataError(f"non-finite value in continuous column '{name}' (impute first)")
        xs = np.ascontiguousarray(params.standardize(raw))
        if params.mode == MODE_FUZZY:
            w = K.fuzzy_weights(xs, params.centers, params.sigma, params.eps)
        else:
            idx = K.hard_assign(xs, params.centers)
            w = np.zeros(xs.shape + (params.n_bins,), dtype=np.float64)
            np.put_along_axis(w, idx[:, :, None], 1.0, axis=2)
        for seg in layout.segments:
            if seg.kind == ROLE_CONTINUOUS:
                out[:, seg.start : seg.stop] = w[:, seg.cont_index, :]

    col_of = {name: j for j, name in enumerate(schema.feature_columns)}
    for seg in layout.segments:
        if seg.kind != ROLE_CATEGORICAL:
            continue
        col = values[:, col_of[seg.feature]]
        if np.any(np.isnan(col)):
            raise DataError(f"missing value in categorical column '{seg.feature}' (impute first)")
        idx = col.astype(np.int64)
        if np.any((idx < 0) | (idx >= seg.width)) or np.any(idx != col):
            bad = col[(col != col.astype(np.int64)) | (col < 0) | (col >= seg.width)][0]
            raise DataError(
                f"category value {bad!r} outside vocabulary of feature '{seg.feature}'"
            )
        out[np.arange(values.shape[0]), seg.start + idx] = 1.0
    return out


def encode_instance(row: np.ndarray, schema: FeatureSchema, params: BinningParams,
                    layout: EncodingLayout | None = None) -> EncodedInstance:
    """Encode one row (dataset-style floats, categoricals as vocab indices)."""
    if layout is None:
        layout = EncodingLayout.build(schema, params.n_bins)
    vec = encode_matrix(np.asarray(row, dtype=np.float64)[None, :], schema, params, layout)[0]
    return EncodedInstance(vector=vec, layout=layout)


def init_binning(d: Dataset, n_bins: int = 3) -> BinningParams:
    """Fit standardization and quantile-spread initial centers on a dataset.

    Centers start at the (2i-1)/(2K) quantiles of each standardized feature;
    the bandwidth starts at half the mean gap between adjacent centers
    (floor 1e-3). Constant features and tied quantiles are perturbed apart
    deterministically so no two centers coincide, with a warning.
    """
    if n_bins < 1:
        raise ModelError(f"bin count must be >= 1, got {n_bins}")
    if d.has_missing():
        raise DataError("dataset has missing cells; impute before binning init")
    cont_cols = [j for j, role in enumerate(d.schema.feature_roles) if role == ROLE_CONTINUOUS]
    f = len(cont_cols)
    centers = np.zeros((f, n_bins), dtype=np.float64)
    rho = np.zeros(f, dtype=np.float64)
    mean = np.zeros(f, dtype=np.float64)
    scale = np.ones(f, dtype=np.float64)

    qs = (2.0 * np.arange(1, n_bins + 1) - 1.0) / (2.0 * n_bins)
    for i, j in enumerate(cont_cols):
        col = d.values[:, j]
        mean[i] = float(np.mean(col))
        std = float(np.std(col))
        name = d.schema.continuous_columns[i]
        if std < 1e-12:
            warnings.warn(f"constant feature '{name}': perturbing collapsed centers", BinningWarning)
            scale[i] = 1.0
            centers[i] = np.arange(n_bins) * 1e-3
        else:
            scale[i] = std
            c = np.quantile((col - mean[i]) / std, qs)
            for q in range(1, n_bins):
                if c[q] - c[q - 1] < DUPLICATE_CENTER_GAP:
                    warnings.warn(
                        f"tied quantiles on feature '{name}': perturbing duplicate centers",
                        BinningWarning,
                    )
                    c[q] = c[q - 1] + 1e-3
            centers[i] = c
        if n_bins > 1:
            sigma0 = max(float(np.mean(np.diff(centers[i]))) / 2.0, 1e-3)
        else:
            sigma0 = 1.0
        rho[i] = float(inv_softplus(sigma0))
    return BinningParams(centers=centers, rho=rho, mean=mean, scale=scale, mode=MODE_FUZZY)
