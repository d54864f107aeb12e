"""Dense linear algebra on object arrays of mpfr.

The matrices met here are small (a few dozen rows) except for Gram matrices
of large bases, so everything is plain textbook algorithms vectorized over
numpy object arrays: row operations run in C, only the outer loops are
Python.
"""
from __future__ import annotations

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .errors import LinearSolveSingular, NotPositiveDefinite
from .precision import current_bits, log10_abs, max_abs, tolerance, zeros


def cholesky(a, error=NotPositiveDefinite, return_loss: bool = False):
    """Lower-triangular ``L`` with ``a = L @ L.T``.

    A non-positive pivot raises ``error`` (no regularization is attempted).
    With ``return_loss`` also returns the largest per-pivot cancellation in
    decimal digits, ``max_j log10(a_jj / pivot_j)``, a cheap estimate of the
    precision the factorization consumed.
    """
    a = np.asarray(a, dtype=object)
    n = a.shape[0]
    low = zeros((n, n))
    loss = 0.0
    for j in range(n):
        row = low[j, :j]
        s = a[j, j] - row.dot(row) if j else a[j, j]
        if not s > 0:
            raise error(f"non-positive pivot at index {j} of {n}")
        if j:
            loss = max(loss, log10_abs(a[j, j]) - log10_abs(s))
        d = gmpy2.sqrt(s)
        low[j, j] = d
        if j + 1 < n:
            col = a[j + 1:, j]
            if j:
                col = col - low[j + 1:, :j].dot(row)
            low[j + 1:, j] = col / d
    if return_loss:
        return low, loss
    return low


def lower_inverse(low):
    """Inverse of a lower-triangular matrix (also lower triangular)."""
    n = low.shape[0]
    inv = zeros((n, n))
    for i in range(n):
        if i:
            row = -low[i, :i].dot(inv[:i, :i + 1])
        else:
            row = zeros(1)
        row[i] = row[i] + 1
        inv[i, :i + 1] = row / low[i, i]
    return inv


def cho_solve(low, b):
    """Solve ``(L L^T) x = b`` given the Cholesky factor ``L``."""
    b = np.asarray(b, dtype=object)
    n = low.shape[0]
    y = np.empty_like(b)
    for i in range(n):
        acc = b[i] - low[i, :i].dot(y[:i]) if i else b[i]
        y[i] = acc / low[i, i]
    x = np.empty_like(b)
    for i in range(n - 1, -1, -1):
        acc = y[i] - low[i + 1:, i].dot(x[i + 1:]) if i + 1 < n else y[i]
        x[i] = acc / low[i, i]
    return x


def solve(a, b):
    """Gaussian elimination with partial pivoting; ``b`` may be 1-D or 2-D.

    Raises :class:`LinearSolveSingular` when a pivot is zero relative to the
    matrix scale at the working precision.
    """
    a = np.array(a, dtype=object)
    b = np.array(b, dtype=object)
    vec = b.ndim == 1
    if vec:
        b = b.reshape(-1, 1)
    n = a.shape[0]
    scale = max_abs(a.ravel())
    tiny = scale * mpfr(2) ** (8 - current_bits())
    for k in range(n):
        piv = max(range(k, n), key=lambda i: abs(a[i, k]))
        if not abs(a[piv, k]) > tiny:
            raise LinearSolveSingular(f"zero pivot in column {k} of {n}")
        if piv != k:
            a[[k, piv]] = a[[piv, k]]
            b[[k, piv]] = b[[piv, k]]
        for i in range(k + 1, n):
            f = a[i, k] / a[k, k]
            if f:
                a[i, k:] = a[i, k:] - f * a[k, k:]
                b[i] = b[i] - f * b[k]
    x = np.empty_like(b)
    for i in range(n - 1, -1, -1):
        acc = b[i] - a[i, i + 1:].dot(x[i + 1:]) if i + 1 < n else b[i]
        x[i] = acc / a[i, i]
    return x[:, 0] if vec else x


def _normalize(v):
    norm = gmpy2.sqrt(v.dot(v))
    v = v / norm
    # deterministic sign: largest component positive
    k = max(range(len(v)), key=lambda i: abs(v[i]))
    return -v if v[k] < 0 else v


def _residual(p, lam, v):
    return max_abs(p.dot(v) - lam * v)


def smallest_eigenpair(p, tol=None, max_iter: int = 500):
    """Smallest eigenvalue, unit eigenvector and eigen-gap of a symmetric PD matrix.

    Closed form up to 2x2; above that, Cholesky-based inverse iteration
    followed by Rayleigh-quotient polishing. The gap is exact for 2x2 and a
    deflation estimate otherwise.
    """
    p = np.asarray(p, dtype=object)
    n = p.shape[0]
    if tol is None:
        tol = tolerance()
    if n == 1:
        if not p[0, 0] > 0:
            raise NotPositiveDefinite("1x1 matrix is not positive")
        return p[0, 0], np.array([mpfr(1)], dtype=object), None
    if n == 2:
        a, b, c = p[0, 0], p[0, 1], p[1, 1]
        half = (a - c) / 2
        r = gmpy2.sqrt(half * half + b * b)
        big = (a + c) / 2 + r
        det = a * c - b * b
        if not (a > 0 and det > 0):
            raise NotPositiveDefinite("2x2 matrix is not positive definite")
        lam = det / big
        v1 = np.array([b, lam - a], dtype=object)
        v2 = np.array([lam - c, b], dtype=object)
        v = v1 if abs(v1[0]) + abs(v1[1]) >= abs(v2[0]) + abs(v2[1]) else v2
        if gmpy2.is_zero(v[0]) and gmpy2.is_zero(v[1]):
            v = np.array([mpfr(1), mpfr(0)], dtype=object) if a <= c else np.array([mpfr(0), mpfr(1)], dtype=object)
        return lam, _normalize(v), 2 * r

    low = cholesky(p, error=NotPositiveDefinite)
    scale = max_abs(p.ravel())
    x = _normalize(np.array([mpfr(1) + mpfr(k) / (4 * n) for k in range(n)], dtype=object))
    rho = x.dot(p.dot(x))
    loose = mpfr(10) ** -6
    for _ in range(max_iter):
        x = _normalize(cho_solve(low, x))
        new = x.dot(p.dot(x))
        done = abs(new - rho) <= loose * new
        rho = new
        if done:
            break
    shift = rho
    # once the shift is exact to working precision the shifted system is
    # singular; back it off by half the digits and keep iterating
    backoff = scale * mpfr(2) ** (-(current_bits() // 2))
    for _ in range(50):
        if _residual(p, rho, x) <= tol * scale:
            break
        shifted = p.copy()
        for i in range(n):
            shifted[i, i] = shifted[i, i] - shift
        try:
            y = solve(shifted, x)
        except LinearSolveSingular:
            shift = shift - backoff
            continue
        x = _normalize(y)
        rho = x.dot(p.dot(x))
        shift = rho

    deflated = p + (scale * n) * np.outer(x, x)
    dlow = cholesky(deflated, error=NotPositiveDefinite)
    y = _normalize(np.array([mpfr(1)] * n, dtype=object) - x.dot(np.array([mpfr(1)] * n, dtype=object)) * x)
    second = y.dot(deflated.dot(y))
    for _ in range(60):
        y = _normalize(cho_solve(dlow, y))
        new = y.dot(deflated.dot(y))
        if abs(new - second) <= loose * new:
            second = new
            break
        second = new
    return rho, x, second - rho


def is_positive_definite(p) -> bool:
    try:
        cholesky(p)
    except NotPositiveDefinite:
        return False
    return True


def leading_minors(a):
    """Leading principal minors via the Cholesky pivots (products of squares)."""
    low = cholesky(a)
    out = []
    acc = mpfr(1)
    for j in range(low.shape[0]):
        acc = acc * low[j, j] ** 2
        out.append(acc)
    return out
