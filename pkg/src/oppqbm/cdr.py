"""Projection coefficients, positive matrices and the energy functionals.

For an order ``I`` the projections of a trial wavefunction onto the first
``I + 1`` orthonormal polynomials are linear in the missing moments,
``c_n = Lambda[n] . u``; their squared sum is the quadratic form
``u^T P_I u``. Two functionals of the energy are derived from it: the
smallest eigenvalue of ``P_I`` (unit-norm constraint) and the constrained
minimum with ``u[0] = 1``.
"""
from __future__ import annotations

import math
import threading
import warnings
from dataclasses import dataclass, field

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .errors import CoverageError, InvalidParameter, PrecisionExhausted, SubmatrixNotPD
from .linalg import cho_solve, cholesky, smallest_eigenpair
from .mer import CoeffTable, ProblemSpec, build_coeff_table, build_derivative_table
from .precision import GUARD_DIGITS, current_bits, current_digits, log10_abs, real, zeros
from .weights import BasisTable, build_basis, last_index, missing_order

LAMBDA = "lambda"
CONSTRAINED = "L"

#: eigen-gaps below this fraction of the eigenvalue are flagged
GAP_WARN = 1e-6


class DegenerateEigenvalue(UserWarning):
    """Smallest eigenvalue of ``P_I`` is nearly degenerate."""


@dataclass(frozen=True)
class LambdaTable:
    """``vectors[n]`` has length ``dims[n]`` (the missing-moment count of row n)."""

    energy: mpfr
    order: int
    vectors: list
    dims: list
    dvectors: list | None = None
    problem: str = ""
    weight: str = ""

    def matrix(self, derivative: bool = False) -> np.ndarray:
        """Rows zero-padded to the largest dimension."""
        src = self.dvectors if derivative else self.vectors
        if src is None:
            raise CoverageError("derivative projections not computed")
        width = max(self.dims)
        out = zeros((len(src), width))
        for n, v in enumerate(src):
            out[n, : len(v)] = v
        return out


@dataclass(frozen=True)
class PMatrix:
    matrix: np.ndarray
    order: int
    energy: mpfr
    dmatrix: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class EnergyFunctional:
    """One evaluated functional.

    ``vector`` is the unit eigenvector (``kind="lambda"``) or the optimal
    missing-moment vector with leading entry 1 (``kind="L"``).
    """

    kind: str
    order: int
    energy: mpfr
    value: mpfr
    vector: np.ndarray
    derivative: mpfr | None = None
    gap: mpfr | None = None
    flags: tuple = field(default=())


def _dims(basis: BasisTable, coeffs: CoeffTable, count: int) -> list:
    if coeffs.dim == 1:
        return [coeffs.m_s + 1] * count
    return [missing_order(n) + 1 for n in range(count)]


def lambda_vectors(basis: BasisTable, coeffs: CoeffTable, order: int, derivative: bool = False) -> LambdaTable:
    """``Lambda[n, l] = sum_j xi[n, j] M(index_j, l)`` for ``n <= order``."""
    if order >= basis.size:
        raise CoverageError(f"basis has {basis.size} polynomials, order {order} requested")
    count = order + 1
    ordering = basis.ordering[:count]
    xi = basis.xi[:count, :count]
    lam = xi.dot(coeffs.rows(ordering))
    dims = _dims(basis, coeffs, count)
    if max(dims) > coeffs.m_s + 1:
        raise CoverageError("coefficient table has too few missing moments for this order")
    vectors = [lam[n, : dims[n]] for n in range(count)]
    dvectors = None
    if derivative:
        dlam = xi.dot(coeffs.rows(ordering, derivative=True))
        dvectors = [dlam[n, : dims[n]] for n in range(count)]
    wkey = basis.weight.key if basis.weight is not None else ""
    return LambdaTable(coeffs.energy, order, vectors, dims, dvectors, coeffs.problem, wkey)


def partial_sum(lam: LambdaTable, u) -> mpfr:
    """``sum_n (Lambda[n] . u)**2``."""
    u = np.asarray(u, dtype=object)
    if len(u) < max(lam.dims):
        raise InvalidParameter("missing-moment vector is shorter than the projections")
    total = mpfr(0)
    for v in lam.vectors:
        c = v.dot(u[: len(v)])
        total += c * c
    return total


def p_matrix(lam: LambdaTable, with_derivative: bool = False, order: int | None = None) -> PMatrix:
    """``P = sum_n Lambda[n] Lambda[n]^T`` (and ``dP/dE``) through ``order``."""
    if order is None:
        order = lam.order
    if order > lam.order:
        raise CoverageError("order exceeds the projection table")
    width = lam.dims[order]
    a = lam.matrix()[: order + 1, :width]
    p = a.T.dot(a)
    dp = None
    if with_derivative:
        da = lam.matrix(derivative=True)[: order + 1, :width]
        cross = da.T.dot(a)
        dp = cross + cross.T
    return PMatrix(p, order, lam.energy, dp)


def lambda_min(P: PMatrix) -> EnergyFunctional:
    """Smallest eigenvalue of ``P`` with its unit eigenvector."""
    value, vec, gap = smallest_eigenpair(P.matrix)
    flags = ()
    if gap is not None and gap < GAP_WARN * value:
        warnings.warn(f"near-degenerate smallest eigenvalue at order {P.order}", DegenerateEigenvalue, stacklevel=2)
        flags = ("degenerate",)
    deriv = d_lambda_min(P, vec) if P.dmatrix is not None else None
    return EnergyFunctional(LAMBDA, P.order, P.energy, value, vec, deriv, gap, flags)


def cqfm_value(P: PMatrix) -> EnergyFunctional:
    """Minimum of ``u^T P u`` subject to ``u[0] = 1``.

    With ``P = [[C, B^T], [B, A]]`` the optimum is ``u = (1, -A^{-1} B)`` and
    the value ``C - B^T A^{-1} B``.
    """
    p = P.matrix
    if P.dim == 1:
        vec = np.array([mpfr(1)], dtype=object)
        value = p[0, 0]
    else:
        a = p[1:, 1:]
        b = p[1:, 0]
        low = cholesky(a, error=SubmatrixNotPD)
        y = cho_solve(low, b)
        value = p[0, 0] - b.dot(y)
        vec = np.empty(P.dim, dtype=object)
        vec[0] = mpfr(1)
        vec[1:] = -y
    if not value > 0:
        raise SubmatrixNotPD(f"constrained minimum {value} is not positive; raise the precision")
    deriv = d_functional(P, vec) if P.dmatrix is not None else None
    return EnergyFunctional(CONSTRAINED, P.order, P.energy, value, vec, deriv)


def d_functional(P: PMatrix, vec) -> mpfr:
    """``vec^T (dP/dE) vec``; the energy derivative at the optimizer."""
    if P.dmatrix is None:
        raise InvalidParameter("P matrix built without its derivative")
    return vec.dot(P.dmatrix.dot(vec))


def d_lambda_min(P: PMatrix, vec) -> mpfr:
    """Energy derivative of the smallest eigenvalue from its eigenvector."""
    return d_functional(P, vec)


# ---------------------------------------------------------------- evaluator

_BASES: dict = {}
_BASES_LOCK = threading.Lock()


def shared_basis(weight, size: int, method: str = "auto") -> BasisTable:
    """Basis with at least ``size`` polynomials, shared per (weight, precision).

    Leading polynomials do not depend on how many follow, so a larger cached
    basis is sliced instead of rebuilt.
    """
    key = (weight.key, current_bits(), method)
    with _BASES_LOCK:
        have = _BASES.get(key)
        if have is None or have.size < size:
            have = build_basis(weight, size - 1, method=method)
            _BASES[key] = have
    if have.size == size:
        return have
    gram = have.gram[:size, :size] if have.gram is not None else None
    return BasisTable(have.weight, have.xi[:size, :size], have.ordering[:size], gram, have.digits, have.method, have.loss)


def seed_basis(table: BasisTable, method: str = "auto") -> None:
    """Register an externally loaded basis (e.g. from the disk cache)."""
    key = (table.weight.key, current_bits(), method)
    with _BASES_LOCK:
        have = _BASES.get(key)
        if have is None or have.size < table.size:
            _BASES[key] = table


def clear_basis_cache() -> None:
    with _BASES_LOCK:
        _BASES.clear()


def _energy_key(E: mpfr):
    man, exp = E.as_mantissa_exp()
    return (int(man), int(exp))


class Evaluator:
    """Energy functional of a fixed order for one problem.

    Calling the evaluator returns the functional value; :meth:`functional`
    returns the full :class:`EnergyFunctional`. Results are cached by exact
    energy value (no interpolation). The first evaluation also estimates the
    digits lost to cancellation in the projections and raises
    :class:`PrecisionExhausted` if fewer than the guard digits would remain.
    """

    def __init__(self, problem: ProblemSpec, order: int, kind: str | None = None,
                 basis: BasisTable | None = None, cache: bool = True, basis_method: str = "auto"):
        if order < 0:
            raise InvalidParameter("order must be non-negative")
        if problem.weight is None:
            raise InvalidParameter(f"problem {problem.name} has no weight (QZM needs eps0)")
        self.problem = problem
        self.order = order
        self.kind = kind or (LAMBDA if problem.constraint == "unit" else CONSTRAINED)
        if self.kind not in (LAMBDA, CONSTRAINED):
            raise InvalidParameter(f"unknown functional kind {self.kind!r}")
        if problem.dim == 1:
            self.m_s = problem.missing_moment_order
            self.max_index = order
        else:
            self.m_s = missing_order(order)
            self.max_index = 2 * self.m_s + 1
        self.basis = basis if basis is not None else shared_basis(problem.weight, order + 1, basis_method)
        self.digits = current_digits()
        self.loss_digits = None
        self.max_residual = mpfr(0)
        self._cache = {} if cache else None
        self._lock = threading.Lock()

    def _probe(self, lam_rows, coeffs):
        """Digits lost to cancellation in the projections (rough estimate).

        Projections are squared and summed, so the loss is measured against
        the largest projection rather than each (possibly vanishing) one.
        """
        count = self.order + 1
        xi = np.abs(self.basis.xi[:count, :count])
        mags = xi.dot(np.abs(coeffs.rows(self.basis.ordering[:count])))
        scale = max(mags.ravel())
        biggest = max(abs(v) for row in lam_rows for v in row)
        if gmpy2.is_zero(biggest):
            return math.inf
        return max(0.0, log10_abs(scale) - log10_abs(biggest))

    def tables(self, E, derivative: bool = False):
        coeffs = build_coeff_table(self.problem, E, self.max_index, self.m_s)
        if derivative:
            coeffs = build_derivative_table(self.problem, coeffs)
        return coeffs

    def functional(self, E, derivative: bool = False) -> EnergyFunctional:
        E = real(E)
        key = (_energy_key(E), derivative)
        if self._cache is not None:
            with self._lock:
                hit = self._cache.get(key)
                if hit is None and not derivative:
                    hit = self._cache.get((key[0], True))
            if hit is not None:
                return hit
        coeffs = self.tables(E, derivative)
        lam = lambda_vectors(self.basis, coeffs, self.order, derivative)
        if self.loss_digits is None:
            loss = self._probe(lam.vectors, coeffs)
            self.loss_digits = loss
            if self.digits - loss < GUARD_DIGITS:
                raise PrecisionExhausted(
                    f"order {self.order} projections lose ~{loss:.0f} of {self.digits} digits; raise the precision")
        P = p_matrix(lam, with_derivative=derivative)
        result = lambda_min(P) if self.kind == LAMBDA else cqfm_value(P)
        if self._cache is not None:
            with self._lock:
                self._cache[key] = result
        return result

    def value(self, E) -> mpfr:
        return self.functional(E).value

    __call__ = value

    def derivative(self, E) -> mpfr:
        return self.functional(E, derivative=True).derivative


def values_by_order(problem: ProblemSpec, E, orders, kind: str | None = None) -> dict:
    """Functional values at one energy for several orders from a single table."""
    orders = sorted(set(orders))
    top = orders[-1]
    ev = Evaluator(problem, top, kind, cache=False)
    coeffs = ev.tables(real(E))
    lam = lambda_vectors(ev.basis, coeffs, top)
    out = {}
    for I in orders:
        P = p_matrix(lam, order=I)
        out[I] = (lambda_min(P) if ev.kind == LAMBDA else cqfm_value(P)).value
    return out


__all__ = [
    "LambdaTable", "PMatrix", "EnergyFunctional", "Evaluator", "lambda_vectors", "partial_sum",
    "p_matrix", "lambda_min", "cqfm_value", "d_lambda_min", "d_functional", "values_by_order",
    "shared_basis", "clear_basis_cache", "last_index", "DegenerateEigenvalue",
]
