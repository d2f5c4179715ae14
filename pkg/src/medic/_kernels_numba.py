"""Compiled twins of the hot kernels in :mod:`medic._kernels_numpy`.

Same signatures, same semantics, explicit loops for numba. fastmath stays
off so results are deterministic and agree with the numpy path to rounding.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def fuzzy_weights(xs, centers, sigmas, eps):
    b, f = xs.shape
    k = centers.shape[1]
    out = np.empty((b, f, k), dtype=np.float64)
    d = np.empty(k, dtype=np.float64)
    for i in range(b):
        for j in range(f):
            denom = 2.0 * sigmas[j] * sigmas[j]
            m = np.inf
            for q in range(k):
                delta = xs[i, j] - centers[j, q]
                d[q] = delta * delta / denom
                if d[q] < m:
                    m = d[q]
            s = 0.0
            for q in range(k):
                d[q] = np.exp(m - d[q])
                s += d[q]
            t = s + eps
            for q in range(k):
                out[i, j, q] = d[q] / t
    return out


@njit(cache=True)
def fuzzy_weights_grad(xs, centers, sigmas, eps, gw):
    b, f = xs.shape
    k = centers.shape[1]
    gcenters = np.zeros((f, k), dtype=np.float64)
    gsigmas = np.zeros(f, dtype=np.float64)
    d = np.empty(k, dtype=np.float64)
    w = np.empty(k, dtype=np.float64)
    for i in range(b):
        for j in range(f):
            sig = sigmas[j]
            denom = 2.0 * sig * sig
            m = np.inf
            kstar = 0
            for q in range(k):
                delta = xs[i, j] - centers[j, q]
                d[q] = delta * delta / denom
                if d[q] < m:
                    m = d[q]
                    kstar = q
            s = 0.0
            for q in range(k):
                w[q] = np.exp(m - d[q])
                s += w[q]
            t = s + eps
            a = 0.0
            for q in range(k):
                w[q] = w[q] / t
                a += gw[i, j, q] * w[q]
            for q in range(k):
                gv = gw[i, j, q] * w[q] - a * w[q]
                if q == kstar:
                    gv -= a * (eps / t)
                delta = xs[i, j] - centers[j, q]
                gcenters[j, q] += gv * delta / (sig * sig)
                gsigmas[j] += gv * delta * delta / (sig * sig * sig)
    return gcenters, gsigmas


@njit(cache=True)
def hard_assign(xs, centers):
    b, f = xs.shape
    k = centers.shape[1]
    out = np.empty((b, f), dtype=np.int64)
    for i in range(b):
        for j in range(f):
            best = 0
            delta = xs[i, j] - centers[j, 0]
            best_d = delta * delta
            best_c = centers[j, 0]
            for q in range(1, k):
                delta = xs[i, j] - centers[j, q]
                dq = delta * delta
                if dq < best_d or (dq == best_d and centers[j, q] > best_c):
                    best = q
                    best_d = dq
                    best_c = centers[j, q]
            out[i, j] = best
    return out


@njit(cache=True)
def masked_parts(enc, masks):
    b, d = enc.shape
    p = masks.shape[0]
    out = np.empty((b, p, d), dtype=np.float64)
    for i in range(b):
        for q in range(p):
            for j in range(d):
                out[i, q, j] = enc[i, j] * masks[q, j]
    return out


@njit(cache=True)
def masked_parts_grad(enc, masks, gparts):
    b, d = enc.shape
    p = masks.shape[0]
    genc = np.zeros((b, d), dtype=np.float64)
    gmasks = np.zeros((p, d), dtype=np.float64)
    for i in range(b):
        for q in range(p):
            for j in range(d):
                g = gparts[i, q, j]
                genc[i, j] += g * masks[q, j]
                gmasks[q, j] += g * enc[i, j]
    return genc, gmasks


@njit(cache=True)
def pairwise_sqdist(a, b):
    m, h = a.shape
    n = b.shape[0]
    out = np.empty((m, n), dtype=np.float64)
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for q in range(h):
                delta = a[i, q] - b[j, q]
                acc += delta * delta
            out[i, j] = acc
    return out


@njit(cache=True)
def min_pool_distances(emb, protos):
    b, p, h = emb.shape
    n = protos.shape[0]
    pooled = np.empty((b, n), dtype=np.float64)
    best = np.empty((b, n), dtype=np.int64)
    for i in range(b):
        for j in range(n):
            best_d = np.inf
            best_i = 0
            for q in range(p):
                acc = 0.0
                for r in range(h):
                    delta = emb[i, q, r] - protos[j, r]
                    acc += delta * delta
                if acc < best_d:
                    best_d = acc
                    best_i = q
            pooled[i, j] = best_d
            best[i, j] = best_i
    return pooled, best


@njit(cache=True)
def min_pool_distances_grad(emb, protos, best, gpooled):
    b, p, h = emb.shape
    n = protos.shape[0]
    gemb = np.zeros((b, p, h), dtype=np.float64)
    gprotos = np.zeros((n, h), dtype=np.float64)
    for i in range(b):
        for j in range(n):
            q = best[i, j]
            g = 2.0 * gpooled[i, j]
            for r in range(h):
                delta = emb[i, q, r] - protos[j, r]
                gemb[i, q, r] += g * delta
                gprotos[j, r] -= g * delta
    return gemb, gprotos
