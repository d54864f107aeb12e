"""Moment-equation representations and their coefficient tables.

A problem's moment recursion is supplied as an *equation generator*: for a
row index it returns the terms ``(moment_index, coeff, d_coeff)`` of one
homogeneous linear relation ``sum(coeff * u[moment_index]) == 0`` whose
coefficients depend on the energy-like parameter (``d_coeff`` is their
energy derivative).

Tables are always built numerically at one energy; every dependent moment is
stored as its vector of coefficients against the missing moments, so
``u(index) = table.row(index) @ u_missing``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np
from gmpy2 import mpfr

from .errors import CoverageError, InvalidParameter, PrecisionExhausted, SingularStep
from .linalg import solve
from .precision import current_digits, real, tolerance, unit_vector, zeros

Index = Any  # int for 1-D problems, (m, n) for 2-D problems
Term = tuple  # (Index, coeff, d_coeff)

HIERARCHICAL = "hierarchical"


@dataclass(frozen=True)
class ProblemSpec:
    """A registered moment problem.

    ``equation(row, energy)`` returns the terms of the relation for ``row``.
    For 1-D problems row ``p`` determines moment ``p + m_s + 1``; for 2-D
    problems the relations at ``(m, n)`` determine antidiagonal ``m+n+1``.
    """

    name: str
    dim: int
    missing_moment_order: int | str
    equation: Callable[[Index, Any], list]
    energy_param: str = "E"
    constraint: str = "unit"
    weight: Any = None
    params: Mapping[str, Any] = field(default_factory=dict)
    energy_check: Callable[[Any], None] | None = None

    @property
    def hierarchical(self) -> bool:
        return self.missing_moment_order == HIERARCHICAL

    def canonical(self, index: Index) -> Index:
        if self.dim == 2:
            m, n = index
            return (m, n) if m <= n else (n, m)
        return index

    def check_energy(self, energy) -> None:
        if self.energy_check is not None:
            self.energy_check(energy)


@dataclass(frozen=True)
class CoeffTable:
    """Coefficients ``M(index, l)`` (and optionally their energy derivatives)."""

    problem: str
    dim: int
    energy: mpfr
    m_s: int
    max_index: int
    m_values: dict
    dm_values: dict | None = None
    digits: int = 0

    def _lookup(self, values, index):
        if self.dim == 2:
            m, n = index
            index = (m, n) if m <= n else (n, m)
        try:
            return values[index]
        except KeyError:
            raise CoverageError(f"moment {index} not in table (max index {self.max_index})") from None

    def row(self, index) -> np.ndarray:
        return self._lookup(self.m_values, index)

    def drow(self, index) -> np.ndarray:
        if self.dm_values is None:
            raise CoverageError("derivative table not built")
        return self._lookup(self.dm_values, index)

    def rows(self, indices, derivative: bool = False) -> np.ndarray:
        get = self.drow if derivative else self.row
        out = zeros((len(indices), self.m_s + 1))
        for i, idx in enumerate(indices):
            out[i] = get(idx)
        return out

    def indices(self):
        return list(self.m_values)

    def moments(self, u) -> dict:
        """Moments generated from the missing-moment vector ``u``."""
        u = np.asarray(u, dtype=object)
        return {k: v.dot(u) for k, v in self.m_values.items()}

    def expanded(self) -> dict:
        """2-D table with both ``(m, n)`` and ``(n, m)`` keys."""
        if self.dim != 2:
            return dict(self.m_values)
        out = {}
        for (m, n), v in self.m_values.items():
            out[(m, n)] = v
            out[(n, m)] = v
        return out


def _missing_indices(spec: ProblemSpec, m_s: int):
    if spec.dim == 1:
        return list(range(m_s + 1))
    return [(k, k) for k in range(m_s + 1)]


def _rows_1d(max_index: int, m_s: int):
    return range(max_index - m_s)


def _rows_2d(d: int):
    return [(m, d - m) for m in range(d // 2 + 1)]


def _unknowns_2d(d: int, m_s: int):
    out = []
    for a in range((d + 1) // 2 + 1):
        idx = (a, d + 1 - a)
        if idx[0] == idx[1] and idx[0] <= m_s:
            continue
        out.append(idx)
    return out


def _validate(spec: ProblemSpec, energy, max_index: int, m_s: int):
    if m_s < 0:
        raise InvalidParameter("m_s must be non-negative")
    if not spec.hierarchical and m_s != spec.missing_moment_order:
        raise InvalidParameter(f"{spec.name} has fixed m_s={spec.missing_moment_order}, got {m_s}")
    if spec.dim == 1 and max_index < m_s:
        raise InvalidParameter("max_index must be >= m_s")
    if spec.dim == 2 and not (m_s <= max_index <= 2 * m_s + 1):
        raise InvalidParameter("2-D tables need m_s <= max_index <= 2*m_s + 1")
    spec.check_energy(energy)


def _assemble(spec, terms, unknown_pos, values, dvalues=None):
    """Split an equation into unknown coefficients and a known remainder."""
    coeffs = {}
    known = None
    for idx, c, dc in terms:
        if min(idx if spec.dim == 2 else (idx,)) < 0:
            continue
        key = spec.canonical(idx)
        if key in unknown_pos:
            coeffs[key] = (coeffs.get(key, (0, 0))[0] + c, coeffs.get(key, (0, 0))[1] + dc)
            continue
        if dvalues is None:
            contrib = c * values[key]
        else:
            contrib = c * dvalues[key] + dc * values[key]
        known = contrib if known is None else known + contrib
    return coeffs, known


def build_coeff_table(spec: ProblemSpec, energy, max_index: int, m_s: int | None = None) -> CoeffTable:
    """Coefficients ``M_E(index, l)`` for every moment up to ``max_index``.

    1-D: all ``p <= max_index``. 2-D: all ``m + n <= max_index`` with
    ``m <= n`` (``max_index <= 2*m_s + 1``), one square linear solve per
    antidiagonal. The result is residual-checked.
    """
    if m_s is None:
        m_s = spec.missing_moment_order
    energy = real(energy)
    _validate(spec, energy, max_index, m_s)
    k = m_s + 1
    values = {idx: unit_vector(k, l) for l, idx in enumerate(_missing_indices(spec, m_s))}

    if spec.dim == 1:
        for p in _rows_1d(max_index, m_s):
            target = p + m_s + 1
            coeffs, known = _assemble(spec, spec.equation(p, energy), {target: 0}, values)
            lead = coeffs.get(target, (0, 0))[0]
            if not lead:
                raise SingularStep(f"vanishing leading coefficient at p={p}")
            values[target] = -known / lead if known is not None else zeros(k)
    else:
        for d in range(max_index):
            rows = _rows_2d(d)
            unknowns = _unknowns_2d(d, m_s)
            if len(rows) != len(unknowns):
                raise SingularStep(f"antidiagonal {d}: {len(rows)} equations for {len(unknowns)} unknowns")
            pos = {u: i for i, u in enumerate(unknowns)}
            a = zeros((len(rows), len(unknowns)))
            rhs = zeros((len(rows), k))
            for i, row in enumerate(rows):
                coeffs, known = _assemble(spec, spec.equation(row, energy), pos, values)
                for key, (c, _) in coeffs.items():
                    a[i, pos[key]] = c
                if known is not None:
                    rhs[i] = -known
            sol = solve(a, rhs)
            for u, i in pos.items():
                values[u] = sol[i]

    table = CoeffTable(spec.name, spec.dim, energy, m_s, max_index, values, None, current_digits())
    worst = recurrence_residual(spec, table)
    if worst > tolerance():
        raise PrecisionExhausted(f"recurrence residual {float(worst):.3e} exceeds tolerance")
    return table


def build_derivative_table(spec: ProblemSpec, table: CoeffTable) -> CoeffTable:
    """Add ``dM/dE`` by sweeping the differentiated recursion.

    The derivative satisfies the same relations plus an inhomogeneous term
    from the energy dependence of the coefficients, with zero initial rows.
    """
    energy = table.energy
    m_s = table.m_s
    k = m_s + 1
    values = table.m_values
    dvalues = {idx: zeros(k) for idx in _missing_indices(spec, m_s)}

    if spec.dim == 1:
        for p in _rows_1d(table.max_index, m_s):
            target = p + m_s + 1
            coeffs, known = _assemble(spec, spec.equation(p, energy), {target: 0}, values, dvalues)
            lead, dlead = coeffs.get(target, (0, 0))
            if not lead:
                raise SingularStep(f"vanishing leading coefficient at p={p}")
            acc = known if known is not None else zeros(k)
            if dlead:
                acc = acc + dlead * values[target]
            dvalues[target] = -acc / lead
    else:
        for d in range(table.max_index):
            rows = _rows_2d(d)
            unknowns = _unknowns_2d(d, m_s)
            pos = {u: i for i, u in enumerate(unknowns)}
            a = zeros((len(rows), len(unknowns)))
            rhs = zeros((len(rows), k))
            for i, row in enumerate(rows):
                coeffs, known = _assemble(spec, spec.equation(row, energy), pos, values, dvalues)
                acc = known if known is not None else zeros(k)
                for key, (c, dc) in coeffs.items():
                    a[i, pos[key]] = c
                    if dc:
                        acc = acc + dc * values[key]
                rhs[i] = -acc
            sol = solve(a, rhs)
            for u, i in pos.items():
                dvalues[u] = sol[i]

    return CoeffTable(table.problem, table.dim, energy, m_s, table.max_index, values, dvalues, table.digits)


def recurrence_residual(spec: ProblemSpec, table: CoeffTable, derivative: bool = False) -> mpfr:
    """Largest relative residual of the defining relations over the table.

    Each relation is evaluated componentwise and divided by the sum of the
    magnitudes of its terms. For 2-D tables every instance with
    ``m + n < max_index`` is checked, including mirrored rows.
    """
    if spec.dim == 1:
        rows = list(_rows_1d(table.max_index, table.m_s))
    else:
        rows = [(m, d - m) for d in range(table.max_index) for m in range(d + 1)]
    worst = mpfr(0)
    for row in rows:
        total = None
        scale = None
        for idx, c, dc in spec.equation(row, table.energy):
            if min(idx if spec.dim == 2 else (idx,)) < 0:
                continue
            if derivative:
                term = c * table.drow(idx) + dc * table.row(idx)
                mag = abs(c) * np.abs(table.drow(idx)) + abs(dc) * np.abs(table.row(idx))
            else:
                term = c * table.row(idx)
                mag = abs(c) * np.abs(table.row(idx))
            total = term if total is None else total + term
            scale = mag if scale is None else scale + mag
        for r, s in zip(total, scale):
            if s:
                rel = abs(r) / s
                if rel > worst:
                    worst = rel
    return worst


def generate_qzm_moments(spec: ProblemSpec | None, eps, B, m_s: int) -> CoeffTable:
    """Binding-energy coefficients ``M_eps(m, n, l)`` for ``m + n <= 2*m_s + 1``.

    ``spec`` may be ``None`` to use a fresh QZM registration for field ``B``;
    otherwise its field must equal ``B``.
    """
    from .problems import QzmSpec, register_problem

    B = real(B)
    if not B > 0:
        raise InvalidParameter("B must be positive")
    if spec is None:
        spec = register_problem(QzmSpec(B=B))
    elif real(spec.params.get("B")) != B:
        raise InvalidParameter("B does not match the problem registration")
    return build_coeff_table(spec, eps, 2 * m_s + 1, m_s)


def build_polynomial_table(spec: ProblemSpec, max_index: int) -> list:
    """1-D coefficients ``M_E(p, l)`` as exact polynomials in the energy.

    Returns, for each ``p``, an object array of shape ``(m_s + 1, deg + 1)``
    holding the coefficients of ``E**0, E**1, ...``. The relation
    coefficients must be affine in ``E`` with an energy-independent leading
    coefficient. Used only by root tracking; bounds use numeric tables.
    """
    if spec.dim != 1:
        raise InvalidParameter("polynomial tables are 1-D only")
    m_s = spec.missing_moment_order
    k = m_s + 1
    polys = {}
    for l in range(k):
        arr = zeros((k, 1))
        arr[l, 0] = mpfr(1)
        polys[l] = arr
    zero = mpfr(0)

    def padded(arr, width):
        if arr.shape[1] >= width:
            return arr
        out = zeros((k, width))
        out[:, : arr.shape[1]] = arr
        return out

    for p in range(max_index - m_s):
        target = p + m_s + 1
        acc = zeros((k, 1))
        lead = None
        for idx, c, dc in spec.equation(p, zero):
            if idx < 0:
                continue
            if idx == target:
                if dc:
                    raise InvalidParameter("leading coefficient depends on the energy")
                lead = c
                continue
            src = polys[idx]
            term = zeros((k, src.shape[1] + (1 if dc else 0)))
            term[:, : src.shape[1]] = c * src
            if dc:
                term[:, 1:] = term[:, 1:] + dc * src
            width = max(acc.shape[1], term.shape[1])
            acc = padded(acc, width) + padded(term, width)
        if not lead:
            raise SingularStep(f"vanishing leading coefficient at p={p}")
        polys[target] = -acc / lead
    return [polys[p] for p in range(max_index + 1)]
