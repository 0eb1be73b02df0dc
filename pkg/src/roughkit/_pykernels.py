"""Pure numpy implementation of the hot kernels (fallback for :mod:`roughkit._kernels`).

Loops run over one grid index; the other index is vectorised.
"""
from __future__ import annotations

import math

import numpy as np

from .algebra import diff_norm_components, inv_components, mul_components

BACKEND = "python"


def _take(comps, idx):
    return tuple(None if c is None else c[idx] for c in comps)


def _prepare(X, Y, level):
    if X[0].shape != Y[0].shape:
        raise ValueError("paths must share grid and dimension")
    return inv_components(X, level), X, inv_components(Y, level), Y


def _norms_for(Xinv, X, Yinv, Y, i, j, level):
    a = mul_components(_take(Xinv, i), _take(X, j), level)
    b = mul_components(_take(Yinv, i), _take(Y, j), level)
    return diff_norm_components(a, b, level)


def lift_points(x0, deltas, level):
    x0 = np.asarray(x0, dtype=np.float64)
    dv = np.asarray(deltas, dtype=np.float64)
    d = x0.shape[0]
    P1 = np.vstack([x0, x0 + np.cumsum(dv, axis=0)]) if len(dv) else x0[None, :].copy()
    prev1 = P1[:-1]
    half = 0.5 * dv[:, :, None] * dv[:, None, :]
    inc2 = prev1[:, :, None] * dv[:, None, :] + half
    start2 = 0.5 * np.multiply.outer(x0, x0)
    P2 = np.concatenate([start2[None], start2 + np.cumsum(inc2, axis=0)]) if len(dv) else start2[None]
    P3 = None
    if level == 3:
        start3 = np.einsum("i,j,k->ijk", x0, x0, x0) / 6.0
        inc3 = (
            P2[:-1, :, :, None] * dv[:, None, None, :]
            + prev1[:, :, None, None] * half[:, None, :, :]
            + half[:, :, :, None] * dv[:, None, None, :] / 3.0
        )
        P3 = np.concatenate([start3[None], start3 + np.cumsum(inc3, axis=0)]) if len(dv) else start3[None]
    return P1, P2.reshape(-1, d, d), P3


def holder_sup(X, Y, t, p, level, I=None, J=None):
    P = _prepare(X, Y, level)
    t = np.asarray(t, dtype=np.float64)
    n = len(t)
    best, bi, bj = 0.0, 0, min(1, n - 1)
    if I is None:
        for i in range(n - 1):
            j = np.arange(i + 1, n)
            r = _norms_for(*P, i, j, level) / (t[j] - t[i]) ** (1.0 / p)
            k = int(np.argmax(r))
            if r[k] > best:
                best, bi, bj = float(r[k]), i, int(j[k])
        return best, bi, bj
    I = np.asarray(I, dtype=np.int64)
    J = np.asarray(J, dtype=np.int64)
    if len(I) == 0:
        return best, bi, bj
    r = _norms_for(*P, I, J, level) / (t[J] - t[I]) ** (1.0 / p)
    k = int(np.argmax(r))
    if r[k] > 0.0:
        return float(r[k]), int(I[k]), int(J[k])
    return 0.0, int(I[0]), int(J[0])


def pair_norms(X, Y, level, I, J):
    P = _prepare(X, Y, level)
    return _norms_for(*P, np.asarray(I, dtype=np.int64), np.asarray(J, dtype=np.int64), level)


def pvar_dp(X, Y, p, level):
    P = _prepare(X, Y, level)
    n = X[0].shape[0]
    V = np.zeros(n)
    for j in range(1, n):
        i = np.arange(j)
        # libm pow, as in the compiled kernel (numpy's vectorised power may differ in the last bit)
        w = np.fromiter((math.pow(v, p) for v in _norms_for(*P, i, j, level).tolist()), float, j)
        V[j] = max(0.0, float(np.max(V[:j] + w)))
    return float(V[-1]) if n else 0.0


def _good2_terms(Z1, Z2, d, i, j):
    z1 = Z1[j] - Z1[i]
    z2 = Z2[j] - Z2[i] - Z1[i][..., :, None] * z1[..., None, :]
    a1 = np.linalg.norm(z1[..., :d] - z1[..., d:], axis=-1)
    yy = z2[..., d:, d:]
    a2 = np.sqrt(np.sum((z2[..., :d, :d] - yy) ** 2, axis=(-2, -1)))
    a4 = np.sqrt(np.sum((z2[..., d:, :d] - yy) ** 2, axis=(-2, -1)))
    return a1, a2, a4


def good2_sup(Z1, Z2, d, t, p, I=None, J=None):
    Z1 = np.asarray(Z1, dtype=np.float64)
    Z2 = np.asarray(Z2, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    best = np.zeros(3)
    if I is None:
        rows = [(i, np.arange(i + 1, len(t))) for i in range(len(t) - 1)]
    else:
        rows = [(np.asarray(I, dtype=np.int64), np.asarray(J, dtype=np.int64))]
    for i, j in rows:
        if np.size(j) == 0:
            continue
        w = t[j] - t[i]
        a1, a2, a4 = _good2_terms(Z1, Z2, d, i, j)
        cur = np.array([
            np.max(a1 / w ** (1.0 / p)),
            np.max(a2 / w ** (2.0 / p)),
            np.max(a4 / w ** (2.0 / p)),
        ])
        best = np.maximum(best, cur)
    return tuple(float(b) for b in best)
