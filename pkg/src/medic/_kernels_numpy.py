"""Vectorized numpy implementations of the hot kernels.

This is the fallback path used when numba is unavailable or when
``MEDIC_BACKEND=numpy`` is set; :mod:`medic._kernels_numba` provides the
compiled twins with identical signatures and semantics. Keep the two files
in sync; ``tests/test_kernels.py`` asserts their agreement.

Shared conventions:

* ``xs`` is a (B, F) matrix of standardized continuous values.
* ``centers`` is (F, K), ``sigmas`` is (F,) with all entries > 0.
* Fuzzy weights are Gaussian-kernel softmax assignments with a stability
  constant ``eps`` added to the max-shifted denominator.
* Min-pooling ties break to the lowest part index; hard binning ties break
  to the larger center (the upper half-open interval).
"""

from __future__ import annotations

import numpy as np


def fuzzy_weights(xs: np.ndarray, centers: np.ndarray, sigmas: np.ndarray, eps: float) -> np.ndarray:
    """Soft bin memberships, shape (B, F, K)."""
    d = (xs[:, :, None] - centers[None, :, :]) ** 2 / (2.0 * sigmas**2)[None, :, None]
    m = d.min(axis=2, keepdims=True)
    u = np.exp(m - d)
    return u / (u.sum(axis=2, keepdims=True) + eps)


def fuzzy_weights_grad(
    xs: np.ndarray, centers: np.ndarray, sigmas: np.ndarray, eps: float, gw: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Backward pass of :func:`fuzzy_weights` for the bin parameters.

    ``gw`` is the upstream gradient on the weights, shape (B, F, K). Returns
    gradients on ``centers`` (F, K) and ``sigmas`` (F,). The max shift in the
    forward pass is differentiated exactly, including the eps correction on
    the arg-min bin.
    """
    d = (xs[:, :, None] - centers[None, :, :]) ** 2 / (2.0 * sigmas**2)[None, :, None]
    kstar = d.argmin(axis=2)[:, :, None]
    m = np.take_along_axis(d, kstar, axis=2)
    u = np.exp(m - d)
    t = u.sum(axis=2, keepdims=True) + eps
    w = u / t

    a = (gw * w).sum(axis=2, keepdims=True)
    gv = gw * w - a * w
    corr = a * (eps / t)
    np.put_along_axis(gv, kstar, np.take_along_axis(gv, kstar, axis=2) - corr, axis=2)

    diff = xs[:, :, None] - centers[None, :, :]
    sig2 = (sigmas**2)[None, :, None]
    gcenters = (gv * diff / sig2).sum(axis=0)
    gsigmas = (gv * diff**2).sum(axis=(0, 2)) / sigmas**3
    return gcenters, gsigmas


def hard_assign(xs: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Nearest-center bin index per value, shape (B, F) int64.

    Exact distance ties resolve to the larger center, matching the half-open
    interval convention.
    """
    order = np.argsort(centers, axis=1, kind="stable")
    sorted_centers = np.take_along_axis(centers, order, axis=1)
    d = (xs[:, :, None] - sorted_centers[None, :, :]) ** 2
    k = centers.shape[1]
    last_min = (k - 1) - d[:, :, ::-1].argmin(axis=2)
    return np.take_along_axis(
        np.broadcast_to(order[None, :, :], d.shape), last_min[:, :, None], axis=2
    )[:, :, 0].astype(np.int64)


def masked_parts(enc: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """Elementwise mask application: (B, D) x (P, D) -> (B, P, D)."""
    return enc[:, None, :] * masks[None, :, :]


def masked_parts_grad(
    enc: np.ndarray, masks: np.ndarray, gparts: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of :func:`masked_parts` on the encoding and the masks."""
    genc = np.einsum("bpd,pd->bd", gparts, masks)
    gmasks = np.einsum("bpd,bd->pd", gparts, enc)
    return genc, gmasks


def pairwise_sqdist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared euclidean distances, shape (m, n).

    Computed by direct subtraction (chunked over rows of ``a``) so that
    identical vectors give an exact zero.
    """
    m, h = a.shape
    n = b.shape[0]
    out = np.empty((m, n), dtype=np.float64)
    chunk = max(1, 4_000_000 // max(1, n * h))
    for lo in range(0, m, chunk):
        hi = min(m, lo + chunk)
        diff = a[lo:hi, None, :] - b[None, :, :]
        out[lo:hi] = np.einsum("mnh,mnh->mn", diff, diff)
    return out


def min_pool_distances(emb: np.ndarray, protos: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-prototype minimum squared distance over parts.

    ``emb`` is (B, P, H), ``protos`` is (N, H); returns pooled distances
    (B, N) and the arg-min part indices (B, N) int64.
    """
    b, p, h = emb.shape
    d = pairwise_sqdist(emb.reshape(b * p, h), protos).reshape(b, p, -1)
    best = d.argmin(axis=1).astype(np.int64)
    pooled = np.take_along_axis(d, best[:, None, :], axis=1)[:, 0, :]
    return pooled, best


def min_pool_distances_grad(
    emb: np.ndarray, protos: np.ndarray, best: np.ndarray, gpooled: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Backward pass of :func:`min_pool_distances` on embeddings and prototypes."""
    b = emb.shape[0]
    rows = np.arange(b)[:, None]
    sel = emb[rows, best]
    diff = sel - protos[None, :, :]
    g = 2.0 * gpooled[:, :, None] * diff
    gprotos = -g.sum(axis=0)
    gemb = np.zeros_like(emb)
    np.add.at(gemb, (rows, best), g)
    return gemb, gprotos
