# cython: language_level=3
"""Compiled hot kernels: batched hyperbolic MLR forward/backward and
pairwise distance matrices. Mirrors ``_pykernels`` exactly in semantics."""

import numpy as np

from libc.math cimport asinh, exp, log, log1p, sqrt

BACKEND = "cython"

cdef double BETA_FLOOR = 1e-15


cdef inline void _mobius_neg_r(
    const double[::1] h, const double[::1] r, double c, double hh,
    double[::1] u, double* den_out, double* A_out,
) noexcept nogil:
    # u = (-r) (+)_c h
    cdef Py_ssize_t j, n = h.shape[0]
    cdef double ah = 0.0, aa = 0.0, A, Bc, den
    for j in range(n):
        ah -= r[j] * h[j]
        aa += r[j] * r[j]
    A = 1.0 + 2.0 * c * ah + c * hh
    Bc = 1.0 - c * aa
    den = 1.0 + 2.0 * c * ah + c * c * aa * hh
    for j in range(n):
        u[j] = (-A * r[j] + Bc * h[j]) / den
    den_out[0] = den
    A_out[0] = A


def hyp_logits(H, R, W, double c):
    cdef const double[:, ::1] Hv = np.ascontiguousarray(H, dtype=np.float64)
    cdef const double[:, ::1] Rv = np.ascontiguousarray(R, dtype=np.float64)
    cdef const double[:, ::1] Wv = np.ascontiguousarray(W, dtype=np.float64)
    cdef Py_ssize_t B = Hv.shape[0], K = Rv.shape[0], n = Hv.shape[1]
    out = np.empty((B, K), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef double[::1] u = np.empty(n, dtype=np.float64)
    cdef double[::1] wn = np.empty(K, dtype=np.float64)
    cdef double[::1] lam = np.empty(K, dtype=np.float64)
    cdef Py_ssize_t b, k, j
    cdef double sc = sqrt(c), hh, den, A, alpha, uu, beta, z, acc
    for k in range(K):
        acc = 0.0
        for j in range(n):
            acc += Wv[k, j] * Wv[k, j]
        wn[k] = sqrt(acc)
        acc = 0.0
        for j in range(n):
            acc += Rv[k, j] * Rv[k, j]
        lam[k] = 2.0 / (1.0 - c * acc)
    with nogil:
        for b in range(B):
            hh = 0.0
            for j in range(n):
                hh += Hv[b, j] * Hv[b, j]
            for k in range(K):
                _mobius_neg_r(Hv[b], Rv[k], c, hh, u, &den, &A)
                alpha = 0.0
                uu = 0.0
                for j in range(n):
                    alpha += u[j] * Wv[k, j]
                    uu += u[j] * u[j]
                beta = 1.0 - c * uu
                if beta < BETA_FLOOR:
                    beta = BETA_FLOOR
                z = 2.0 * sc * alpha / (beta * wn[k])
                ov[b, k] = lam[k] * wn[k] / sc * asinh(z)
    return out


def hyp_loss_grad(H, labels, R, W, double c):
    """Summed cross-entropy and summed gradients w.r.t. R, W and H."""
    cdef const double[:, ::1] Hv = np.ascontiguousarray(H, dtype=np.float64)
    cdef const long long[::1] yv = np.ascontiguousarray(labels, dtype=np.int64)
    cdef const double[:, ::1] Rv = np.ascontiguousarray(R, dtype=np.float64)
    cdef const double[:, ::1] Wv = np.ascontiguousarray(W, dtype=np.float64)
    cdef Py_ssize_t B = Hv.shape[0], K = Rv.shape[0], n = Hv.shape[1]

    gR = np.zeros((K, n), dtype=np.float64)
    gW = np.zeros((K, n), dtype=np.float64)
    gH = np.zeros((B, n), dtype=np.float64)
    cdef double[:, ::1] gRv = gR, gWv = gW, gHv = gH

    # per-sample scratch, indexed [k, j] or [k]
    cdef double[:, ::1] U = np.empty((K, n), dtype=np.float64)
    cdef double[::1] den = np.empty(K, dtype=np.float64)
    cdef double[::1] Aa = np.empty(K, dtype=np.float64)
    cdef double[::1] z = np.empty(K, dtype=np.float64)
    cdef double[::1] asz = np.empty(K, dtype=np.float64)
    cdef double[::1] beta = np.empty(K, dtype=np.float64)
    cdef double[::1] zeta = np.empty(K, dtype=np.float64)
    cdef double[::1] g_u = np.empty(n, dtype=np.float64)
    cdef double[::1] g_N = np.empty(n, dtype=np.float64)
    cdef double[::1] wn = np.empty(K, dtype=np.float64)
    cdef double[::1] lam = np.empty(K, dtype=np.float64)
    cdef double[::1] aa = np.empty(K, dtype=np.float64)
    cdef double[::1] g_wn_sum = np.zeros(K, dtype=np.float64)
    cdef double[::1] g_lam_sum = np.zeros(K, dtype=np.float64)

    cdef Py_ssize_t b, k, j
    cdef long long y
    cdef double sc = sqrt(c), hh, alpha, uu, m, s, loss = 0.0
    cdef double gzk, gz, g_alpha, g_beta, g_den, gNa, gNh, Bc, hj, aj, acc

    for k in range(K):
        acc = 0.0
        for j in range(n):
            acc += Wv[k, j] * Wv[k, j]
        wn[k] = sqrt(acc)
        acc = 0.0
        for j in range(n):
            acc += Rv[k, j] * Rv[k, j]
        aa[k] = acc
        lam[k] = 2.0 / (1.0 - c * acc)

    for b in range(B):
        y = yv[b]
        if y < 0 or y >= K:
            raise IndexError(f"label {y} out of range for {K} classes")

    with nogil:
        for b in range(B):
            y = yv[b]
            hh = 0.0
            for j in range(n):
                hh += Hv[b, j] * Hv[b, j]
            for k in range(K):
                _mobius_neg_r(Hv[b], Rv[k], c, hh, U[k], &den[k], &Aa[k])
                alpha = 0.0
                uu = 0.0
                for j in range(n):
                    alpha += U[k, j] * Wv[k, j]
                    uu += U[k, j] * U[k, j]
                beta[k] = 1.0 - c * uu
                if beta[k] < BETA_FLOOR:
                    beta[k] = BETA_FLOOR
                z[k] = 2.0 * sc * alpha / (beta[k] * wn[k])
                asz[k] = asinh(z[k])
                zeta[k] = lam[k] * wn[k] / sc * asz[k]

            m = zeta[0]
            for k in range(1, K):
                if zeta[k] > m:
                    m = zeta[k]
            s = 0.0
            for k in range(K):
                s += exp(zeta[k] - m)
            loss += m + log(s) - zeta[y]

            for k in range(K):
                gzk = exp(zeta[k] - m) / s
                if k == y:
                    gzk -= 1.0
                gz = gzk * (lam[k] * wn[k] / sc) / sqrt(1.0 + z[k] * z[k])
                g_alpha = gz * 2.0 * sc / (beta[k] * wn[k])
                g_beta = -gz * z[k] / beta[k]
                g_wn_sum[k] += -gz * z[k] / wn[k] + gzk * lam[k] / sc * asz[k]
                g_lam_sum[k] += gzk * wn[k] / sc * asz[k]

                g_den = 0.0
                for j in range(n):
                    g_u[j] = g_alpha * Wv[k, j] - 2.0 * c * g_beta * U[k, j]
                    gWv[k, j] += g_alpha * U[k, j]
                    g_den -= g_u[j] * U[k, j]
                g_den /= den[k]

                gNa = 0.0
                gNh = 0.0
                for j in range(n):
                    g_N[j] = g_u[j] / den[k]
                    gNa -= g_N[j] * Rv[k, j]
                    gNh += g_N[j] * Hv[b, j]

                Bc = 1.0 - c * aa[k]
                for j in range(n):
                    hj = Hv[b, j]
                    aj = -Rv[k, j]
                    # d/da, then r = -a
                    gRv[k, j] -= (
                        Aa[k] * g_N[j]
                        + 2.0 * c * gNa * hj
                        - 2.0 * c * gNh * aj
                        + g_den * (2.0 * c * hj + 2.0 * c * c * hh * aj)
                    )
                    gHv[b, j] += (
                        Bc * g_N[j]
                        + 2.0 * c * gNa * (aj + hj)
                        + g_den * (2.0 * c * aj + 2.0 * c * c * aa[k] * hj)
                    )

        for k in range(K):
            for j in range(n):
                gWv[k, j] += g_wn_sum[k] / wn[k] * Wv[k, j]
                gRv[k, j] += g_lam_sum[k] * c * lam[k] * lam[k] * Rv[k, j]

    return loss, gR, gW, gH


def pairwise_poincare(X, Y, double c):
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[:, ::1] Yv = np.ascontiguousarray(Y, dtype=np.float64)
    cdef Py_ssize_t nx = Xv.shape[0], ny = Yv.shape[0], n = Xv.shape[1]
    out = np.empty((nx, ny), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef double[::1] yy = np.empty(ny, dtype=np.float64)
    cdef Py_ssize_t i, k, j
    cdef double xx, d, t, q, sc = sqrt(c)
    with nogil:
        for k in range(ny):
            t = 0.0
            for j in range(n):
                t += Yv[k, j] * Yv[k, j]
            yy[k] = t
        for i in range(nx):
            xx = 0.0
            for j in range(n):
                xx += Xv[i, j] * Xv[i, j]
            for k in range(ny):
                d = 0.0
                for j in range(n):
                    t = Xv[i, j] - Yv[k, j]
                    d += t * t
                q = 2.0 * c * d / ((1.0 - c * xx) * (1.0 - c * yy[k]))
                if q < 0.0:
                    q = 0.0
                ov[i, k] = log1p(q + sqrt(q * (q + 2.0))) / sc
    return out


def pairwise_euclidean(X, Y):
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[:, ::1] Yv = np.ascontiguousarray(Y, dtype=np.float64)
    cdef Py_ssize_t nx = Xv.shape[0], ny = Yv.shape[0], n = Xv.shape[1]
    out = np.empty((nx, ny), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, k, j
    cdef double d, t
    with nogil:
        for i in range(nx):
            for k in range(ny):
                d = 0.0
                for j in range(n):
                    t = Xv[i, j] - Yv[k, j]
                    d += t * t
                ov[i, k] = sqrt(d)
    return out
