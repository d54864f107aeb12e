"""Minima search, cap selection, bracketing and root tracking.

Everything here works on an *evaluator*: any callable mapping an energy to
the functional value (an :class:`~oppqbm.cdr.Evaluator` or a plain function
of an mpfr). The drivers are sequential and deterministic.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import gmpy2
import mpmath
from gmpy2 import mpfr

from .errors import (
    CapBelowMinimum,
    InvalidParameter,
    NeighborCollision,
    NoMinimumFound,
)
from .precision import current_digits, real, to_mpf, zeros

INV_PHI = (gmpy2.sqrt(mpfr(5)) - 1) / 2


class MonotonicityWarning(UserWarning):
    """A minima sequence failed to increase (usually a precision problem)."""


class EdgeMinimumWarning(UserWarning):
    """A minimum sits within one grid step of the window edge."""


@dataclass(frozen=True)
class MinimaRecord:
    order: int
    energy: mpfr
    value: mpfr
    kind: str = "lambda"
    window: tuple = ()
    edge: bool = False
    state: int = 0
    flags: tuple = field(default=())


@dataclass(frozen=True)
class BoundRecord:
    order: int
    cap: mpfr
    lower: mpfr
    upper: mpfr
    minimum: mpfr
    value: mpfr
    tolerance: mpfr
    state: int = 0

    @property
    def width(self) -> mpfr:
        return self.upper - self.lower


def _rel_tol(tol, x):
    return tol * max(abs(x), mpfr(1))


def golden_section(f, a, b, tol, fa=None, fb=None):
    """Minimize a unimodal ``f`` on ``[a, b]`` until the bracket is below ``tol``.

    Returns ``(x, f(x))`` for the best point seen.
    """
    a, b = real(a), real(b)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while abs(b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    return (c, fc) if fc < fd else (d, fd)


def _grid(lo, hi, points):
    step = (hi - lo) / points
    return [lo + k * step for k in range(points + 1)], step


def find_local_minima(f, window, grid_step=None, refine_tol=None, kind: str = "lambda", order: int = 0,
                      grid_points: int = 200, derivative=None) -> list:
    """Grid scan then golden-section refinement of every interior local minimum.

    ``refine_tol`` is relative (default ``1e-12``). Candidates on the first or
    last grid point are reported with ``edge=True`` and a warning, unrefined;
    a functional monotone over the whole grid raises :class:`NoMinimumFound`.
    With ``derivative`` (a callable returning the energy derivative) each
    bracket is refined by a sign-change root search of the derivative instead.
    """
    lo, hi = real(window[0]), real(window[1])
    if not hi > lo:
        raise InvalidParameter("window must be nonempty")
    if grid_step is not None:
        grid_points = max(int(math.ceil(float((hi - lo) / real(grid_step)))), 2)
    tol = real(refine_tol) if refine_tol is not None else mpfr(10) ** -12
    xs, step = _grid(lo, hi, grid_points)
    ys = [f(x) for x in xs]
    out = []
    n = len(xs)
    rising = all(a < b for a, b in zip(ys, ys[1:]))
    falling = all(a > b for a, b in zip(ys, ys[1:]))
    if rising or falling:
        raise NoMinimumFound(f"functional is monotone on [{float(lo):.6g}, {float(hi):.6g}]")
    for k in range(n):
        left = ys[k - 1] if k > 0 else None
        right = ys[k + 1] if k + 1 < n else None
        if left is not None and right is not None:
            if ys[k] < left and ys[k] <= right:
                if derivative is not None:
                    x = _derivative_root(derivative, xs[k - 1], xs[k + 1], _rel_tol(tol, xs[k]))
                    fx = f(x)
                else:
                    x, fx = golden_section(f, xs[k - 1], xs[k + 1], _rel_tol(tol, xs[k]))
                if fx > ys[k]:  # refinement cannot do worse than the grid point
                    x, fx = xs[k], ys[k]
                out.append(MinimaRecord(order, x, fx, kind, (lo, hi)))
        elif (left is None and right is not None and ys[k] < right) or (right is None and left is not None and ys[k] < left):
            warnings.warn(f"minimum at window edge {float(xs[k]):.6g}", EdgeMinimumWarning, stacklevel=2)
            out.append(MinimaRecord(order, xs[k], ys[k], kind, (lo, hi), edge=True, flags=("edge",)))
    if not out:
        raise NoMinimumFound(f"functional is monotone on [{float(lo):.6g}, {float(hi):.6g}]")
    out.sort(key=lambda r: r.energy)
    return [MinimaRecord(r.order, r.energy, r.value, r.kind, r.window, r.edge, i, r.flags) for i, r in enumerate(out)]


def _derivative_root(df, a, b, tol):
    da, db = df(a), df(b)
    if da > 0 or db < 0:
        # grid bracket does not show the sign change; fall back to midpoint search
        return (a + b) / 2
    return _illinois(df, a, b, da, db, tol, target=mpfr(0))


def _illinois(f, a, b, fa, fb, tol, target):
    """Root of ``f(x) = target`` on a sign-changing bracket, kept bracketed.

    Regula falsi with the Illinois modification; falls back to bisection
    whenever an interpolated step fails to shrink the bracket enough.
    Stops when the bracket is narrower than ``tol``.
    """
    ga, gb = fa - target, fb - target
    side = 0
    while abs(b - a) > tol:
        width = abs(b - a)
        x = b - gb * (b - a) / (gb - ga) if gb != ga else (a + b) / 2
        if not (min(a, b) < x < max(a, b)):
            x = (a + b) / 2
        gx = f(x) - target
        if gx == 0:
            return x
        if (gx > 0) == (gb > 0):
            b, gb = x, gx
            if side == 1:
                ga /= 2
            side = 1
        else:
            a, ga = x, gx
            if side == -1:
                gb /= 2
            side = -1
        if abs(b - a) > width / 2:
            # force progress: probe close to the live end of the bracket
            m = (a + b) / 2
            gm = f(m) - target
            if (gm > 0) == (gb > 0):
                b, gb = m, gm
            else:
                a, ga = m, gm
            side = 0
    return (a + b) / 2


def _pick_near(records, target):
    return min(records, key=lambda r: abs(r.energy - target))


def minima_sequence(factory, window, orders, state: int = 0, grid_points: int = 200,
                    track_points: int = 16, refine_tol=None, derivative: bool = False,
                    on_record=None, previous: MinimaRecord | None = None, delta=None) -> list:
    """Local minima of one state across increasing orders.

    ``factory(order)`` returns an evaluator. The first order scans the whole
    window and takes the ``state``-th interior minimum (by energy); later
    orders search ``E_min +- max(10 |dE_min|, floor)`` around the previous
    minimum, widening on failure. Values must increase with the order;
    violations are flagged and warned about.

    ``previous`` and ``delta`` resume tracking from an earlier record (the
    last minimum found and its shift from the one before).
    """
    orders = list(orders)
    if any(b <= a for a, b in zip(orders, orders[1:])):
        raise InvalidParameter("orders must be strictly increasing")
    lo, hi = real(window[0]), real(window[1])
    if not hi > lo:
        raise InvalidParameter("window must be nonempty")
    tol = real(refine_tol) if refine_tol is not None else mpfr(10) ** -12
    records = []
    prev = previous
    delta = real(delta) if delta is not None else None
    for I in orders:
        ev = factory(I)
        df = ev.derivative if derivative and hasattr(ev, "derivative") else None
        if prev is None:
            found = [r for r in find_local_minima(ev, (lo, hi), None, tol, _kind(ev), I, grid_points, df)
                     if not r.edge]
            if len(found) <= state:
                raise NoMinimumFound(f"order {I}: state {state} not found in window")
            rec = found[state]
        else:
            floor = 50 * _rel_tol(tol, prev.energy)
            half = (hi - lo) / 2 if delta is None else max(10 * abs(delta), floor)
            rec = None
            for _ in range(6):
                w = (max(prev.energy - half, lo), min(prev.energy + half, hi))
                try:
                    found = [r for r in find_local_minima(ev, w, None, tol, _kind(ev), I, track_points, df)
                             if not r.edge]
                except NoMinimumFound:
                    found = []
                if found:
                    rec = _pick_near(found, prev.energy)
                    break
                half *= 4
            if rec is None:
                raise NoMinimumFound(f"order {I}: lost the minimum near {float(prev.energy):.12g}")
            delta = rec.energy - prev.energy
        flags = rec.flags
        if prev is not None and not rec.value > prev.value:
            warnings.warn(f"minima sequence not increasing at order {I}", MonotonicityWarning, stacklevel=2)
            flags = flags + ("nonmonotone",)
        # keep the full search window: it bounds later bracketing
        rec = MinimaRecord(I, rec.energy, rec.value, rec.kind, (lo, hi), rec.edge, state, flags)
        records.append(rec)
        if on_record is not None:
            on_record(rec)
        prev = rec
    return records


def _kind(ev):
    return getattr(ev, "kind", "lambda")


def choose_cap(seq, margin=None, override=None) -> mpfr:
    """Coarse cap above every minimum value: ``(1 + margin) * last``.

    ``margin`` defaults to 0.10; ``override`` is returned as-is after checking
    that it exceeds every value.
    """
    if not seq:
        raise InvalidParameter("empty minima sequence")
    top = max(r.value for r in seq)
    if override is not None:
        cap = real(override)
        if not cap > top:
            raise CapBelowMinimum(f"cap {cap} does not exceed the largest minimum {top}")
        return cap
    margin = real(margin) if margin is not None else mpfr("0.10")
    if not margin > 0:
        raise InvalidParameter("margin must be positive")
    return (1 + margin) * seq[-1].value if seq[-1].value == top else (1 + margin) * top


def root_tolerance(digits: int | None = None) -> mpfr:
    """Relative bracketing tolerance ``10**-min(digits/2, 30)``."""
    digits = current_digits() if digits is None else digits
    return mpfr(10) ** -min(digits // 2, 30)


def bracket_bounds(f, minimum: MinimaRecord, cap, step=None, limits=None, tol=None) -> BoundRecord:
    """Roots of ``f(E) = cap`` on both sides of a local minimum.

    Steps double outward from the minimum until the functional exceeds the
    cap; reaching ``limits`` (adjacent minima or window edges) first, or
    seeing the functional turn down, raises :class:`NeighborCollision`.
    Each side is then solved to ``tol`` (relative, default
    :func:`root_tolerance`).
    """
    cap = real(cap)
    e0, v0 = minimum.energy, minimum.value
    if not cap > v0:
        raise CapBelowMinimum(f"cap {cap} <= functional value {v0} at the minimum")
    if step is None:
        if minimum.window:
            step = (real(minimum.window[1]) - real(minimum.window[0])) / 200
        else:
            step = max(abs(e0), mpfr(1)) * mpfr(10) ** -3
    step = real(step)
    if limits is None:
        limits = minimum.window if minimum.window else (None, None)
    lim_lo = real(limits[0]) if limits[0] is not None else None
    lim_hi = real(limits[1]) if limits[1] is not None else None
    tol = root_tolerance() if tol is None else real(tol)
    abs_tol = _rel_tol(tol, e0)

    def side(direction, limit):
        inner, f_inner = e0, v0
        s = step
        while True:
            x = e0 + direction * s
            if limit is not None and (x - limit) * direction >= 0:
                x = limit
            fx = f(x)
            if fx > cap:
                return inner, f_inner, x, fx
            if fx < f_inner:
                raise NeighborCollision(f"functional decreases again near {float(x):.12g} below the cap")
            if limit is not None and x == limit:
                raise NeighborCollision(f"reached {float(limit):.12g} before exceeding the cap")
            inner, f_inner = x, fx
            s *= 2

    a_in, fa_in, a_out, fa_out = side(-1, lim_lo)
    lower = _illinois(f, a_out, a_in, fa_out, fa_in, abs_tol, cap)
    b_in, fb_in, b_out, fb_out = side(1, lim_hi)
    upper = _illinois(f, b_in, b_out, fb_in, fb_out, abs_tol, cap)
    return BoundRecord(minimum.order, cap, lower, upper, e0, v0, tol, minimum.state)


# ---------------------------------------------------------------- OPPQ-AM

@dataclass(frozen=True)
class RootReport:
    roots: list
    complex_count: int
    degree: int


def _poly_of_projection(basis, polys, n):
    """Coefficient array (missing moment x power of E) of projection ``n``."""
    width = max(polys[j].shape[1] for j in range(n + 1))
    k = polys[0].shape[0]
    acc = zeros((k, width))
    for j in range(n + 1):
        p = polys[j]
        acc[:, : p.shape[1]] = acc[:, : p.shape[1]] + basis.xi[n, j] * p
    return acc


def _polymul(a, b):
    out = [mpfr(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] += x * y
    return out


def _trim(c):
    c = list(c)
    scale = max((abs(x) for x in c), default=mpfr(0))
    eps = scale * mpfr(2) ** (-gmpy2.get_context().precision + 16)
    while len(c) > 1 and abs(c[-1]) <= eps:
        c.pop()
    return c


def oppq_am_roots(problem, order: int, window=None, basis=None) -> RootReport:
    """Energies where the highest projection(s) vanish identically.

    ``m_s = 0``: real roots of ``c_order(E)``. ``m_s = 1``: roots of the
    determinant of the projections ``order`` and ``order - 1`` (nontrivial
    missing-moment solutions). Complex roots are discarded and counted.
    """
    from .cdr import shared_basis
    from .mer import build_polynomial_table

    if problem.dim != 1:
        raise InvalidParameter("root tracking is implemented for 1-D problems")
    m_s = problem.missing_moment_order
    if m_s not in (0, 1):
        raise InvalidParameter("root tracking supports m_s = 0 or 1")
    if order < m_s:
        raise InvalidParameter("order too small for the missing-moment count")
    basis = basis or shared_basis(problem.weight, order + 1)
    polys = build_polynomial_table(problem, order)
    if m_s == 0:
        coeffs = _trim(_poly_of_projection(basis, polys, order)[0])
    else:
        a = _poly_of_projection(basis, polys, order)
        b = _poly_of_projection(basis, polys, order - 1)
        left = _polymul(list(a[0]), list(b[1]))
        right = _polymul(list(a[1]), list(b[0]))
        n = max(len(left), len(right))
        left += [mpfr(0)] * (n - len(left))
        right += [mpfr(0)] * (n - len(right))
        coeffs = _trim([x - y for x, y in zip(left, right)])
    degree = len(coeffs) - 1
    if degree < 1:
        return RootReport([], 0, degree)
    digits = current_digits()
    lead = coeffs[-1]
    mono = [to_mpf(c / lead) for c in reversed(coeffs)]
    roots = mpmath.polyroots(mono, maxsteps=400 + 20 * degree, extraprec=4 * digits + 10 * degree)
    real_roots, complex_count = [], 0
    imag_tol = mpmath.mpf(10) ** (-(digits // 3))
    for r in roots:
        r = mpmath.mpc(r)
        if abs(r.imag) > imag_tol * max(1, abs(r.real)):
            complex_count += 1
            continue
        x = real(r.real)
        if window is None or real(window[0]) <= x <= real(window[1]):
            real_roots.append(x)
    real_roots.sort()
    return RootReport(real_roots, complex_count, degree)


__all__ = [
    "MinimaRecord", "BoundRecord", "RootReport", "golden_section", "find_local_minima", "minima_sequence",
    "choose_cap", "bracket_bounds", "root_tolerance", "oppq_am_roots", "MonotonicityWarning",
    "EdgeMinimumWarning",
]
