# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for signature lifting and O(N^2) rough-path metric scans.

Same interface as :mod:`roughkit._pykernels`.  Group elements are passed as
component tuples (c1, c2, c3) with c3 = None at level 2.
"""
import numpy as np

from libc.math cimport sqrt, cbrt, pow
from libc.stdlib cimport malloc, free

BACKEND = "cython"


cdef inline void _mul(const double* a1, const double* a2, const double* a3,
                      const double* b1, const double* b2, const double* b3,
                      double* c1, double* c2, double* c3,
                      int d, int level) noexcept nogil:
    cdef int i, j, k
    for i in range(d):
        c1[i] = a1[i] + b1[i]
    for i in range(d):
        for j in range(d):
            c2[i * d + j] = a2[i * d + j] + b2[i * d + j] + a1[i] * b1[j]
    if level == 3:
        for i in range(d):
            for j in range(d):
                for k in range(d):
                    c3[(i * d + j) * d + k] = (a3[(i * d + j) * d + k] + b3[(i * d + j) * d + k]
                                               + a2[i * d + j] * b1[k] + a1[i] * b2[j * d + k])


cdef inline void _inv(const double* g1, const double* g2, const double* g3,
                      double* c1, double* c2, double* c3, int d, int level) noexcept nogil:
    cdef int i, j, k
    for i in range(d):
        c1[i] = -g1[i]
    for i in range(d):
        for j in range(d):
            c2[i * d + j] = g1[i] * g1[j] - g2[i * d + j]
    if level == 3:
        for i in range(d):
            for j in range(d):
                for k in range(d):
                    c3[(i * d + j) * d + k] = (-g3[(i * d + j) * d + k] + g1[i] * g2[j * d + k]
                                               + g2[i * d + j] * g1[k] - g1[i] * g1[j] * g1[k])


cdef inline double _norm(const double* c1, const double* c2, const double* c3,
                         int d, int level) noexcept nogil:
    cdef int i, n
    cdef double s1 = 0.0, s2 = 0.0, s3 = 0.0, out, v
    for i in range(d):
        s1 += c1[i] * c1[i]
    n = d * d
    for i in range(n):
        s2 += c2[i] * c2[i]
    out = sqrt(s1)
    v = sqrt(2.0 * sqrt(s2))
    if v > out:
        out = v
    if level == 3:
        n = d * d * d
        for i in range(n):
            s3 += c3[i] * c3[i]
        v = cbrt(6.0 * sqrt(s3))
        if v > out:
            out = v
    return out


cdef class _Flat:
    """Contiguous 2-D views (N, d**k) of a component tuple."""
    cdef public object a1, a2, a3
    cdef const double[:, ::1] v1, v2, v3
    cdef int n, d, level

    def __init__(self, comps, int level):
        c1, c2, c3 = comps
        n = c1.shape[0]
        d = c1.shape[1]
        self.n = n
        self.d = d
        self.level = level
        self.a1 = np.ascontiguousarray(c1, dtype=np.float64).reshape(n, d)
        self.a2 = np.ascontiguousarray(c2, dtype=np.float64).reshape(n, d * d)
        if level == 3:
            self.a3 = np.ascontiguousarray(c3, dtype=np.float64).reshape(n, d * d * d)
        else:
            self.a3 = np.zeros((n, 1), dtype=np.float64)
        self.v1 = self.a1
        self.v2 = self.a2
        self.v3 = self.a3


cdef _Flat _inverse_all(_Flat X):
    cdef int n = X.n, d = X.d, level = X.level, i
    out1 = np.empty((n, d))
    out2 = np.empty((n, d * d))
    out3 = np.empty((n, d * d * d)) if level == 3 else np.zeros((n, 1))
    cdef double[:, ::1] o1 = out1, o2 = out2, o3 = out3
    with nogil:
        for i in range(n):
            _inv(&X.v1[i, 0], &X.v2[i, 0], &X.v3[i, 0], &o1[i, 0], &o2[i, 0], &o3[i, 0], d, level)
    c3 = out3.reshape(n, d, d, d) if level == 3 else None
    return _Flat((out1, out2.reshape(n, d, d), c3), level)


cdef inline double _diff_norm(const double* a1, const double* a2, double* b1, double* b2, double* b3,
                              int d, int level) noexcept nogil:
    # ||a^{-1} (x) b|| written in terms of b - a so identical inputs give exactly 0; b is overwritten
    cdef int i, j, k
    for i in range(d):
        b1[i] -= a1[i]
    for i in range(d * d):
        b2[i] -= a2[i]
    if level == 3:
        for i in range(d):
            for j in range(d):
                for k in range(d):
                    b3[(i * d + j) * d + k] = (b3[(i * d + j) * d + k] - a1[i] * b2[j * d + k]
                                               - (a2[i * d + j] - a1[i] * a1[j]) * b1[k])
    for i in range(d):
        for j in range(d):
            b2[i * d + j] -= a1[i] * b1[j]
    return _norm(b1, b2, b3, d, level)


cdef inline double _pair_norm(_Flat Xinv, _Flat X, _Flat Yinv, _Flat Y, Py_ssize_t i, Py_ssize_t j,
                              double* t1, double* t2, double* t3,
                              double* z1, double* z2, double* z3) noexcept nogil:
    # a = x_{ij} = Xinv_i (x) X_j, b = y_{ij}; returns ||a^{-1} b||
    cdef int d = X.d, level = X.level, k
    _mul(&Xinv.v1[i, 0], &Xinv.v2[i, 0], &Xinv.v3[i, 0],
         &X.v1[j, 0], &X.v2[j, 0], &X.v3[j, 0], t1, t2, t3, d, level)
    _mul(&Yinv.v1[i, 0], &Yinv.v2[i, 0], &Yinv.v3[i, 0],
         &Y.v1[j, 0], &Y.v2[j, 0], &Y.v3[j, 0], z1, z2, z3, d, level)
    if level == 3:
        for k in range(d * d * d):
            z3[k] = z3[k] - t3[k]
    return _diff_norm(t1, t2, z1, z2, z3, d, level)


cdef double* _scratch(int d) except NULL:
    cdef int m = d + d * d + d * d * d
    cdef double* buf = <double*> malloc(2 * m * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    return buf


def _prepare(X, Y, int level):
    FX = _Flat(X, level)
    FY = _Flat(Y, level)
    if FX.n != FY.n or FX.d != FY.d:
        raise ValueError("paths must share grid and dimension")
    return _inverse_all(FX), FX, _inverse_all(FY), FY


def lift_points(x0, deltas, int level):
    """Prefix products exp(x0) (x) exp(D_1) (x) ... (x) exp(D_k)."""
    cdef const double[::1] v0 = np.ascontiguousarray(x0, dtype=np.float64)
    cdef const double[:, ::1] dv = np.ascontiguousarray(deltas, dtype=np.float64)
    cdef int m = dv.shape[0], d = v0.shape[0], n = m + 1, k, i, j, l
    P1 = np.empty((n, d))
    P2 = np.empty((n, d, d))
    P3 = np.empty((n, d, d, d)) if level == 3 else np.zeros((1, 1, 1, 1))
    cdef double[:, ::1] p1 = P1
    cdef double[:, :, ::1] p2 = P2
    cdef double[:, :, :, ::1] p3 = P3
    cdef double a, b, c
    with nogil:
        for i in range(d):
            p1[0, i] = v0[i]
            for j in range(d):
                p2[0, i, j] = 0.5 * v0[i] * v0[j]
                if level == 3:
                    for l in range(d):
                        p3[0, i, j, l] = v0[i] * v0[j] * v0[l] / 6.0
        for k in range(1, n):
            # P_k = P_{k-1} (x) exp(D); level 3 first since it reads old levels.
            if level == 3:
                for i in range(d):
                    for j in range(d):
                        for l in range(d):
                            a = dv[k - 1, l]
                            p3[k, i, j, l] = (p3[k - 1, i, j, l] + p2[k - 1, i, j] * a
                                              + p1[k - 1, i] * 0.5 * dv[k - 1, j] * a
                                              + dv[k - 1, i] * dv[k - 1, j] * a / 6.0)
            for i in range(d):
                for j in range(d):
                    p2[k, i, j] = (p2[k - 1, i, j] + p1[k - 1, i] * dv[k - 1, j]
                                   + 0.5 * dv[k - 1, i] * dv[k - 1, j])
            for i in range(d):
                p1[k, i] = p1[k - 1, i] + dv[k - 1, i]
    return P1, P2, (P3 if level == 3 else None)


def holder_sup(X, Y, t, double p, int level, I=None, J=None):
    """max over pairs of d(x_{ij}, y_{ij}) / (t_j - t_i)^(1/p), first maximiser."""
    cdef _Flat Xinv, FX, Yinv, FY
    Xinv, FX, Yinv, FY = _prepare(X, Y, level)
    cdef const double[::1] tv = np.ascontiguousarray(t, dtype=np.float64)
    cdef int n = FY.n, d = FY.d, m = d + d * d + d * d * d
    cdef double inv_p = 1.0 / p, best = 0.0, r
    cdef Py_ssize_t i, j, q, bi = 0, bj = 1 if n > 1 else 0, npairs
    cdef long[::1] Iv, Jv
    cdef double* buf = _scratch(d)
    try:
        if I is None:
            with nogil:
                for i in range(n - 1):
                    for j in range(i + 1, n):
                        r = _pair_norm(Xinv, FX, Yinv, FY, i, j, buf, buf + d, buf + d + d * d,
                                       buf + m, buf + m + d, buf + m + d + d * d)
                        r = r / pow(tv[j] - tv[i], inv_p)
                        if r > best:
                            best = r
                            bi = i
                            bj = j
        else:
            Iv = np.ascontiguousarray(I, dtype=np.int_)
            Jv = np.ascontiguousarray(J, dtype=np.int_)
            npairs = Iv.shape[0]
            if npairs:
                bi = Iv[0]
                bj = Jv[0]
            with nogil:
                for q in range(npairs):
                    i = Iv[q]
                    j = Jv[q]
                    r = _pair_norm(Xinv, FX, Yinv, FY, i, j, buf, buf + d, buf + d + d * d,
                                   buf + m, buf + m + d, buf + m + d + d * d)
                    r = r / pow(tv[j] - tv[i], inv_p)
                    if r > best:
                        best = r
                        bi = i
                        bj = j
    finally:
        free(buf)
    return best, int(bi), int(bj)


def pair_norms(X, Y, int level, I, J):
    """d(x_{ij}, y_{ij}) for the given index pairs."""
    cdef _Flat Xinv, FX, Yinv, FY
    Xinv, FX, Yinv, FY = _prepare(X, Y, level)
    cdef long[::1] Iv = np.ascontiguousarray(I, dtype=np.int_)
    cdef long[::1] Jv = np.ascontiguousarray(J, dtype=np.int_)
    cdef Py_ssize_t q, npairs = Iv.shape[0]
    out = np.empty(npairs)
    cdef double[::1] ov = out
    cdef int d = FY.d, m = d + d * d + d * d * d
    cdef double* buf = _scratch(d)
    try:
        with nogil:
            for q in range(npairs):
                ov[q] = _pair_norm(Xinv, FX, Yinv, FY, Iv[q], Jv[q], buf, buf + d, buf + d + d * d,
                                   buf + m, buf + m + d, buf + m + d + d * d)
    finally:
        free(buf)
    return out


def pvar_dp(X, Y, double p, int level):
    """max over grid subdivisions of sum d(x_{t_k t_k+1}, y_{t_k t_k+1})^p."""
    cdef _Flat Xinv, FX, Yinv, FY
    Xinv, FX, Yinv, FY = _prepare(X, Y, level)
    cdef int n = FY.n, d = FY.d, m = d + d * d + d * d * d
    V_arr = np.zeros(n)
    cdef double[::1] V = V_arr
    cdef Py_ssize_t i, j
    cdef double best, cand
    cdef double* buf = _scratch(d)
    try:
        with nogil:
            for j in range(1, n):
                best = 0.0
                for i in range(j):
                    cand = V[i] + pow(_pair_norm(Xinv, FX, Yinv, FY, i, j, buf, buf + d, buf + d + d * d,
                                                 buf + m, buf + m + d, buf + m + d + d * d), p)
                    if cand > best:
                        best = cand
                V[j] = best
    finally:
        free(buf)
    return float(V[n - 1]) if n else 0.0


cdef inline void _good2_pair(const double[:, ::1] z1, const double[:, ::1] z2, int d,
                             Py_ssize_t i, Py_ssize_t j, double* a1, double* a2, double* a4) noexcept nogil:
    # increment level 2: Z2_j - Z2_i - Z1_i (x) (Z1_j - Z1_i); x block first, reference block second
    cdef int D = 2 * d, a, b
    cdef double s1 = 0.0, s2 = 0.0, s4 = 0.0, u, yy
    for a in range(d):
        u = (z1[j, a] - z1[i, a]) - (z1[j, d + a] - z1[i, d + a])
        s1 += u * u
    for a in range(d):
        for b in range(d):
            yy = (z2[j, (d + a) * D + d + b] - z2[i, (d + a) * D + d + b]
                  - z1[i, d + a] * (z1[j, d + b] - z1[i, d + b]))
            u = (z2[j, a * D + b] - z2[i, a * D + b]
                 - z1[i, a] * (z1[j, b] - z1[i, b])) - yy
            s2 += u * u
            u = (z2[j, (d + a) * D + b] - z2[i, (d + a) * D + b]
                 - z1[i, d + a] * (z1[j, b] - z1[i, b])) - yy
            s4 += u * u
    a1[0] = sqrt(s1)
    a2[0] = sqrt(s2)
    a4[0] = sqrt(s4)


def good2_sup(Z1, Z2, int d, t, double p, I=None, J=None):
    """The three level-1/level-2 sup terms from the joint level-2 lift Z over R^d + R^d."""
    cdef int n = Z1.shape[0]
    cdef const double[:, ::1] z1 = np.ascontiguousarray(Z1, dtype=np.float64).reshape(n, 2 * d)
    cdef const double[:, ::1] z2 = np.ascontiguousarray(Z2, dtype=np.float64).reshape(n, 4 * d * d)
    cdef const double[::1] tv = np.ascontiguousarray(t, dtype=np.float64)
    cdef double b1 = 0.0, b2 = 0.0, b4 = 0.0, r1, r2, r4, w
    cdef Py_ssize_t i, j, q, npairs
    cdef long[::1] Iv, Jv
    if I is None:
        with nogil:
            for i in range(n - 1):
                for j in range(i + 1, n):
                    _good2_pair(z1, z2, d, i, j, &r1, &r2, &r4)
                    w = tv[j] - tv[i]
                    r1 = r1 / pow(w, 1.0 / p)
                    r2 = r2 / pow(w, 2.0 / p)
                    r4 = r4 / pow(w, 2.0 / p)
                    if r1 > b1:
                        b1 = r1
                    if r2 > b2:
                        b2 = r2
                    if r4 > b4:
                        b4 = r4
    else:
        Iv = np.ascontiguousarray(I, dtype=np.int_)
        Jv = np.ascontiguousarray(J, dtype=np.int_)
        npairs = Iv.shape[0]
        with nogil:
            for q in range(npairs):
                i = Iv[q]
                j = Jv[q]
                _good2_pair(z1, z2, d, i, j, &r1, &r2, &r4)
                w = tv[j] - tv[i]
                r1 = r1 / pow(w, 1.0 / p)
                r2 = r2 / pow(w, 2.0 / p)
                r4 = r4 / pow(w, 2.0 / p)
                if r1 > b1:
                    b1 = r1
                if r2 > b2:
                    b2 = r2
                if r4 > b4:
                    b4 = r4
    return b1, b2, b4
