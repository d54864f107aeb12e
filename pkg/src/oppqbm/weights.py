"""Reference-weight moments and orthonormal polynomial bases.

Two weights are built in: the half-line Hermite weight
``exp(-x/2)/sqrt(x)`` used by both oscillators, and the two-dimensional
weight ``exp(-beta*xi*eta - alpha*(xi + eta))`` used for the quadratic
Zeeman problem, whose moments come from the auxiliary ``Omega`` integrals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import gmpy2
import mpmath
import numpy as np
from gmpy2 import mpfr

from .errors import CancellationDetected, CholeskyNotPD, InvalidParameter, NotPositiveDefinite
from .linalg import cholesky, lower_inverse
from .precision import (
    current_digits,
    real,
    to_mpf,
    tolerance,
    working_precision,
    zeros,
)

HERMITE_HALFLINE = "hermite_halfline"
QZM = "qzm"


def _param_str(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, mpfr):
        return format(x, ".40g")
    return str(x)


@dataclass(frozen=True)
class WeightSpec:
    """Weight kind plus its parameters, kept as decimal strings so the spec is
    hashable and reproducible across precisions."""

    kind: str
    params: tuple = ()

    @classmethod
    def hermite_halfline(cls) -> "WeightSpec":
        return cls(HERMITE_HALFLINE)

    @classmethod
    def qzm(cls, B, eps0) -> "WeightSpec":
        b, e = real(_param_str(B)), real(_param_str(eps0))
        if not (b > 0 and e > 0):
            raise InvalidParameter("qzm weight needs B > 0 and eps0 > 0")
        return cls(QZM, (("B", _param_str(B)), ("eps0", _param_str(eps0))))

    def __post_init__(self):
        if self.kind not in (HERMITE_HALFLINE, QZM):
            raise InvalidParameter(f"unknown weight kind {self.kind!r}")

    @property
    def dim(self) -> int:
        return 2 if self.kind == QZM else 1

    def param(self, name: str) -> mpfr:
        return real(dict(self.params)[name])

    @property
    def key(self) -> str:
        return self.kind + "".join(f";{k}={v}" for k, v in self.params)


# ---------------------------------------------------------------- 1-D weight

def weight_moments_1d(spec: WeightSpec, p_max: int) -> list:
    """``w(p) = Gamma(p + 1/2) * 2**(p + 1/2)`` for ``0 <= p <= p_max``."""
    if spec.kind != HERMITE_HALFLINE:
        raise InvalidParameter("weight_moments_1d needs the hermite_halfline weight")
    w = [gmpy2.sqrt(2 * gmpy2.const_pi())]
    for p in range(p_max):
        w.append((2 * p + 1) * w[-1])
    return w


def hermite_halfline_closed_form(eta: int) -> list:
    """Coefficients (ascending powers) of the degree-``eta`` orthonormal
    polynomial for the half-line Hermite weight, positive leading term.

    These are even Hermite polynomials in ``sqrt(x/2)`` rescaled to unit norm.
    """
    pi = gmpy2.const_pi()
    norm = gmpy2.sqrt(gmpy2.fac(2 * eta)) / gmpy2.root(2 * pi, 4)
    sign = 1 if eta % 2 == 0 else -1
    coeffs = []
    for j in range(eta + 1):
        c = mpfr((-2) ** j) / (gmpy2.fac(eta - j) * gmpy2.fac(2 * j))
        coeffs.append(sign * norm * c / 2 ** eta)
    return coeffs


# ---------------------------------------------------------------- QZM weight

def _omega_raw(g, M: int, N: int):
    """Omega table at the current precision (no conditioning control)."""
    x = 1 / g
    j0 = real(to_mpf(x) * mpmath.exp(to_mpf(x)) * mpmath.e1(to_mpf(x)))
    col = [j0]
    for k in range(1, N + 1):
        col.append((1 - col[-1]) / (k * g))
    out = zeros((M + 1, N + 1))
    for n in range(N + 1):
        prev, cur = mpfr(0), col[n]
        out[0, n] = cur
        for m in range(M):
            nxt = (x if m == 0 else 0) + m * x * prev + (m - n - x) * cur
            prev, cur = cur, nxt
            out[m + 1, n] = cur
    return out


def omega_table(g, M: int, N: int, auto_precision: bool = True, max_extra: int = 4000):
    """``Omega(m, n+1, g)`` for ``0 <= m <= M``, ``0 <= n <= N`` as an array.

    ``Omega(0,1,g) = exp(1/g) E1(1/g) / g`` is evaluated in closed form; the
    ``n`` column follows from integration by parts and the ``m`` rows from the
    upward recursion. Both recursions amplify rounding error (badly when
    ``g`` is small), so the table is computed at two raised precisions and
    accepted once they agree to the caller's tolerance.

    With ``auto_precision=False`` no extra digits are used and
    :class:`CancellationDetected` is raised if the raw table disagrees with a
    guarded recomputation.
    """
    digits = current_digits()
    g = real(g)
    if not g > 0:
        raise InvalidParameter("g must be positive")
    tol = tolerance(digits)

    def agree(a, b):
        for x, y in zip(a.ravel(), b.ravel()):
            if abs(x - y) > tol * abs(y):
                return False
        return True

    if not auto_precision:
        raw = _omega_raw(g, M, N)
        with working_precision(digits + 40):
            ref = _omega_raw(g, M, N)
        if not agree(raw, ref):
            raise CancellationDetected(f"Omega recursion loses more than the guard digits at g={float(g):.3g}")
        return raw

    # rough amplification estimate seeds the first attempt
    est = 0.0
    for n in range(1, N + 1):
        est = max(est, -(math.lgamma(n + 1) + n * math.log(float(g))) / math.log(10))
    extra = int(est) + 20 + M
    while extra <= max_extra:
        with working_precision(digits + extra):
            a = _omega_raw(g, M, N)
        with working_precision(digits + extra + 20):
            b = _omega_raw(g, M, N)
        if agree(a, b):
            out = zeros(a.shape)
            for idx, v in np.ndenumerate(b):
                out[idx] = real(v)
            return out
        extra *= 2
    raise CancellationDetected(f"Omega table did not stabilize within {max_extra} extra digits")


def qzm_weight_moments(spec: WeightSpec, max_total: int) -> dict:
    """``w(m, n)`` for ``m + n <= max_total`` (both index orders)."""
    if spec.kind != QZM:
        raise InvalidParameter("qzm_weight_moments needs the qzm weight")
    B, eps0 = spec.param("B"), spec.param("eps0")
    alpha = gmpy2.sqrt(eps0 / 2)
    g = B / eps0
    om = omega_table(g, max_total // 2, max_total)
    w = {}
    for m in range(max_total // 2 + 1):
        for n in range(m, max_total - m + 1):
            v = gmpy2.fac(n) * om[m, n] / alpha ** (m + n + 2)
            w[(m, n)] = v
            w[(n, m)] = v
    return w


# ---------------------------------------------------------------- 2-D ordering

def antidiagonal(index: int) -> int:
    """Antidiagonal sum ``m + n`` of the monomial at position ``index``."""
    return (math.isqrt(8 * index + 1) - 1) // 2


def monomial(index: int) -> tuple:
    d = antidiagonal(index)
    k = index - d * (d + 1) // 2
    return (d - k, k)


def monomial_ordering(count: int) -> list:
    """``(0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ...`` (first ``count``)."""
    return [monomial(i) for i in range(count)]


def last_index(m_s: int) -> int:
    """Largest polynomial index reachable with ``1 + m_s`` missing moments."""
    return (m_s + 1) * (2 * m_s + 3) - 1


def missing_order(index: int) -> int:
    """Missing-moment order needed by polynomial ``index``."""
    return antidiagonal(index) // 2


# ---------------------------------------------------------------- bases

@dataclass(frozen=True)
class BasisTable:
    """Orthonormal polynomial coefficients.

    ``xi[n, j]`` is the coefficient of monomial ``ordering[j]`` in polynomial
    ``n`` (lower triangular, positive diagonal).
    """

    weight: WeightSpec
    xi: np.ndarray
    ordering: list
    gram: np.ndarray | None
    digits: int
    method: str = "cholesky"
    loss: float = 0.0

    @property
    def size(self) -> int:
        return self.xi.shape[0]

    def orthonormality_residual(self) -> mpfr:
        if self.gram is None:
            raise InvalidParameter("basis built without a Gram matrix")
        r = self.xi.dot(self.gram).dot(self.xi.T)
        worst = mpfr(0)
        for (i, j), v in np.ndenumerate(r):
            e = abs(v - (1 if i == j else 0))
            if e > worst:
                worst = e
        return worst


def gram_matrix(weight: WeightSpec, size: int):
    """Moment matrix ``W[i, j] = w(index_i + index_j)`` and the ordering."""
    if weight.dim == 1:
        ordering = list(range(size))
        w = weight_moments_1d(weight, 2 * (size - 1))
        gram = zeros((size, size))
        for i in range(size):
            for j in range(size):
                gram[i, j] = w[i + j]
        return gram, ordering
    ordering = monomial_ordering(size)
    top = 2 * antidiagonal(size - 1)
    w = qzm_weight_moments(weight, top)
    gram = zeros((size, size))
    for i, (mi, ni) in enumerate(ordering):
        for j, (mj, nj) in enumerate(ordering):
            gram[i, j] = w[(mi + mj, ni + nj)]
    return gram, ordering


def basis_from_gram(gram, ordering, weight=None) -> BasisTable:
    """Cholesky route: ``W = C C^T`` and rows of ``C^{-1}`` are the polynomials."""
    low, loss = cholesky(gram, error=CholeskyNotPD, return_loss=True)
    return BasisTable(weight, lower_inverse(low), list(ordering), gram, current_digits(), "cholesky", loss)


def build_basis(weight: WeightSpec, n_max: int, method: str = "auto", max_attempts: int = 5) -> BasisTable:
    """Orthonormal polynomials ``0..n_max`` for ``weight``.

    ``method="cholesky"`` factors the moment matrix at raised precision; the
    guard is chosen from the measured pivot cancellation and the build is
    repeated until the guard covers it. ``method="closed_form"`` (half-line
    Hermite only) evaluates the explicit coefficients. ``"auto"`` picks the
    closed form when available.

    The returned coefficients are rounded to the caller's precision.
    """
    if n_max < 0:
        raise InvalidParameter("n_max must be non-negative")
    digits = current_digits()
    size = n_max + 1
    if method == "auto":
        method = "closed_form" if weight.kind == HERMITE_HALFLINE else "cholesky"
    if method == "closed_form":
        if weight.kind != HERMITE_HALFLINE:
            raise InvalidParameter("closed form only exists for the half-line Hermite weight")
        xi = zeros((size, size))
        for n in range(size):
            xi[n, : n + 1] = hermite_halfline_closed_form(n)
        gram, ordering = gram_matrix(weight, size)
        return BasisTable(weight, xi, ordering, gram, digits, "closed_form", 0.0)
    if method != "cholesky":
        raise InvalidParameter(f"unknown basis method {method!r}")

    extra = 20
    for _ in range(max_attempts):
        try:
            with working_precision(digits + extra):
                gram, ordering = gram_matrix(weight, size)
                table = basis_from_gram(gram, ordering, weight)
        except NotPositiveDefinite:
            extra *= 2
            continue
        need = int(math.ceil(1.6 * table.loss)) + 20
        if need <= extra:
            break
        extra = need
    else:
        raise CholeskyNotPD(f"moment matrix of size {size} not positive definite within {extra} extra digits")

    def rnd(a):
        out = zeros(a.shape)
        for idx, v in np.ndenumerate(a):
            out[idx] = real(v)
        return out

    return BasisTable(weight, rnd(table.xi), table.ordering, rnd(table.gram), digits, "cholesky", table.loss)
