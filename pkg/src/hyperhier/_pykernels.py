"""Numpy implementations of the hot kernels.

Same signatures and semantics as the compiled ``_ckernels`` module; used when
the extension is unavailable or ``HYPERHIER_PURE`` is set.
"""

import math

import numpy as np

BACKEND = "numpy"


def mobius_neg_r(H, R, c):
    """Return (u, pieces) with u[b, k] = (-R[k]) (+)_c H[b]."""
    a = -R
    ah = H @ a.T
    aa = np.sum(a * a, axis=1)
    hh = np.sum(H * H, axis=1)
    A = 1.0 + 2.0 * c * ah + c * hh[:, None]
    Bc = 1.0 - c * aa
    den = 1.0 + 2.0 * c * ah + c * c * aa[None, :] * hh[:, None]
    N = A[:, :, None] * a[None, :, :] + Bc[None, :, None] * H[:, None, :]
    u = N / den[:, :, None]
    return u, (a, aa, hh, A, Bc, den)


def hyp_logits(H, R, W, c):
    """Hyperbolic MLR logits, shape (B, K)."""
    H = np.ascontiguousarray(H, dtype=np.float64)
    sc = math.sqrt(c)
    u, _ = mobius_neg_r(H, R, c)
    alpha = np.einsum("bkn,kn->bk", u, W)
    beta = np.maximum(1.0 - c * np.sum(u * u, axis=2), 1e-15)
    wn = np.sqrt(np.sum(W * W, axis=1))
    lam = 2.0 / (1.0 - c * np.sum(R * R, axis=1))
    z = 2.0 * sc * alpha / (beta * wn)
    return lam * wn / sc * np.arcsinh(z)


def hyp_loss_grad(H, labels, R, W, c):
    """Summed cross-entropy over the batch and its gradients.

    Returns ``(loss_sum, grad_R, grad_W, grad_H)``; gradients are sums over
    samples, not means.
    """
    H = np.ascontiguousarray(H, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    B = H.shape[0]
    K = R.shape[0]
    if B and (labels.min() < 0 or labels.max() >= K):
        raise IndexError(f"label out of range for {K} classes")
    sc = math.sqrt(c)
    u, (a, aa, hh, A, Bc, den) = mobius_neg_r(H, R, c)
    alpha = np.einsum("bkn,kn->bk", u, W)
    beta = np.maximum(1.0 - c * np.sum(u * u, axis=2), 1e-15)
    wn = np.sqrt(np.sum(W * W, axis=1))
    lam = 2.0 / (1.0 - c * np.sum(R * R, axis=1))
    z = 2.0 * sc * alpha / (beta * wn)
    asz = np.arcsinh(z)
    zeta = lam * wn / sc * asz

    m = np.max(zeta, axis=1, keepdims=True)
    e = np.exp(zeta - m)
    s = np.sum(e, axis=1, keepdims=True)
    rows = np.arange(B)
    loss = float(np.sum(m[:, 0] + np.log(s[:, 0]) - zeta[rows, labels]))
    g_zeta = e / s
    g_zeta[rows, labels] -= 1.0

    gz = g_zeta * (lam * wn / sc) / np.sqrt(1.0 + z * z)
    g_alpha = gz * 2.0 * sc / (beta * wn)
    g_beta = -gz * z / beta
    g_wn = -gz * z / wn + g_zeta * lam / sc * asz
    g_lam = g_zeta * wn / sc * asz

    g_u = g_alpha[:, :, None] * W[None, :, :] - 2.0 * c * g_beta[:, :, None] * u
    gW = np.einsum("bk,bkn->kn", g_alpha, u) + (np.sum(g_wn, axis=0) / wn)[:, None] * W

    g_N = g_u / den[:, :, None]
    g_den = -np.sum(g_u * u, axis=2) / den
    gNa = np.einsum("bkn,kn->bk", g_N, a)
    gNh = np.einsum("bkn,bn->bk", g_N, H)
    g_a = (
        A[:, :, None] * g_N
        + (2.0 * c * gNa)[:, :, None] * H[:, None, :]
        - (2.0 * c * gNh)[:, :, None] * a[None, :, :]
        + g_den[:, :, None]
        * (2.0 * c * H[:, None, :] + 2.0 * c * c * hh[:, None, None] * a[None, :, :])
    )
    g_h = (
        Bc[None, :, None] * g_N
        + (2.0 * c * gNa)[:, :, None] * (a[None, :, :] + H[:, None, :])
        + g_den[:, :, None]
        * (2.0 * c * a[None, :, :] + 2.0 * c * c * aa[None, :, None] * H[:, None, :])
    )
    gR = -np.sum(g_a, axis=0) + (np.sum(g_lam, axis=0) * c * lam * lam)[:, None] * R
    gH = np.sum(g_h, axis=1)
    return loss, gR, gW, gH


def pairwise_poincare(X, Y, c):
    """Matrix of ball distances between rows of X and rows of Y."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    xx = np.sum(X * X, axis=1)
    yy = np.sum(Y * Y, axis=1)
    diff = np.sum((X[:, None, :] - Y[None, :, :]) ** 2, axis=2)
    q = 2.0 * c * diff / ((1.0 - c * xx)[:, None] * (1.0 - c * yy)[None, :])
    q = np.maximum(q, 0.0)
    return np.log1p(q + np.sqrt(q * (q + 2.0))) / math.sqrt(c)


def pairwise_euclidean(X, Y):
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    return np.sqrt(np.sum((X[:, None, :] - Y[None, :, :]) ** 2, axis=2))
