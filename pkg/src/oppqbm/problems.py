"""Concrete moment problems: harmonic and quartic oscillators (even sector)
and the quadratic Zeeman problem in parabolic coordinates (even, ``Lz = 0``).

Oscillator moments are Stieltjes moments in ``x**2`` of the even wavefunction,
so odd Hamburger moments never appear.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import gmpy2
from gmpy2 import mpfr

from .errors import InvalidParameter
from .mer import HIERARCHICAL, ProblemSpec
from .precision import real
from .weights import WeightSpec


@dataclass(frozen=True)
class HarmonicSpec:
    """``V = x**2``; ``u(p+1) = E u(p) + 2p(2p-1) u(p-1)``."""

    name: str = "harmonic"


@dataclass(frozen=True)
class QuarticSpec:
    """``V = x**4 - 5 x**2``; ``u(p+2) = 5 u(p+1) + E u(p) + 2p(2p-1) u(p-1)``."""

    name: str = "quartic"


@dataclass(frozen=True)
class QzmSpec:
    """Quadratic Zeeman problem at field ``B``.

    ``eps0`` is the binding energy frozen into the weight; ``None`` leaves the
    problem without a weight (enough for moment tables).
    """

    B: object = "1"
    eps0: object = None
    name: str = "qzm"


def _harmonic_equation(p, E):
    out = [(p + 1, mpfr(1), mpfr(0)), (p, -E, mpfr(-1))]
    if p:
        out.append((p - 1, mpfr(-2 * p * (2 * p - 1)), mpfr(0)))
    return out


def _quartic_equation(p, E):
    out = [(p + 2, mpfr(1), mpfr(0)), (p + 1, mpfr(-5), mpfr(0)), (p, -E, mpfr(-1))]
    if p:
        out.append((p - 1, mpfr(-2 * p * (2 * p - 1)), mpfr(0)))
    return out


def _qzm_equation(B):
    half = mpfr(1) / 2

    def equation(row, eps):
        m, n = row
        return [
            ((m - 1, n), mpfr(m * m), mpfr(0)),
            ((m, n - 1), mpfr(n * n), mpfr(0)),
            ((m, n + 1), -half * (B * m + eps), -half),
            ((m + 1, n), -half * (B * n + eps), -half),
            ((m, n), mpfr(1), mpfr(0)),
        ]

    return equation


def _positive_eps(eps):
    if not eps > 0:
        raise InvalidParameter(f"binding energy must be positive, got {eps}")


def register_problem(spec) -> ProblemSpec:
    """Wire a problem description into a :class:`ProblemSpec`."""
    if isinstance(spec, ProblemSpec):
        return spec
    if isinstance(spec, HarmonicSpec):
        return ProblemSpec("harmonic", 1, 0, _harmonic_equation, "E", "unit", WeightSpec.hermite_halfline())
    if isinstance(spec, QuarticSpec):
        return ProblemSpec("quartic", 1, 1, _quartic_equation, "E", "unit", WeightSpec.hermite_halfline())
    if isinstance(spec, QzmSpec):
        B = real(spec.B if not isinstance(spec.B, float) else repr(spec.B))
        if not B > 0:
            raise InvalidParameter("B must be positive")
        weight = None
        params = {"B": spec.B}
        if spec.eps0 is not None:
            weight = WeightSpec.qzm(spec.B, spec.eps0)
            params["eps0"] = spec.eps0
            eps0 = real(spec.eps0)

            def check(eps):
                _positive_eps(eps)
                if not eps > eps0:
                    raise InvalidParameter(f"binding energy {eps} must exceed the weight's eps0 = {eps0}")
        else:
            check = _positive_eps
        return ProblemSpec("qzm", 2, HIERARCHICAL, _qzm_equation(B), "epsilon", "u0", weight, params, check)
    raise InvalidParameter(f"unsupported problem description {spec!r}")


def problem_by_name(name: str, **params) -> ProblemSpec:
    """Registry lookup used by the command line (``--problem``/``--param``)."""
    name = name.lower()
    if name == "harmonic":
        if params:
            raise InvalidParameter("harmonic takes no parameters")
        return register_problem(HarmonicSpec())
    if name == "quartic":
        if params:
            raise InvalidParameter("quartic takes no parameters")
        return register_problem(QuarticSpec())
    if name == "qzm":
        unknown = set(params) - {"B", "eps0"}
        if unknown:
            raise InvalidParameter(f"unknown qzm parameters {sorted(unknown)}")
        if "B" not in params:
            raise InvalidParameter("qzm needs B")
        return register_problem(QzmSpec(B=params["B"], eps0=params.get("eps0")))
    raise InvalidParameter(f"unknown problem {name!r}")


def qzm_energy_map(eps, B):
    """Total energy ``E = B/2 - eps`` for binding energy ``eps``."""
    return real(B) / 2 - real(eps)


def qzm_binding_energy(E, B):
    """Inverse of :func:`qzm_energy_map`."""
    return real(B) / 2 - real(E)


def freeze_eps0(eps) -> str:
    """Round a binding-energy estimate down to the weight parameter.

    At or above 1 the integer part is kept, below 1 only the first significant
    figure; the result is returned as a decimal string.
    """
    eps = real(eps)
    if not eps > 0:
        raise InvalidParameter("binding energy must be positive")
    if eps >= 1:
        return f"{int(gmpy2.floor(eps))}.0"
    exp = math.floor(math.log10(float(eps)))
    scale = mpfr(10) ** (-exp)
    lead = int(gmpy2.floor(eps * scale))
    if lead >= 10:  # float log10 rounded just below a power of ten
        lead, exp = 1, exp + 1
    return f"{lead}e{exp}" if exp < -6 else format(lead * 10.0 ** exp, f".{max(-exp, 1)}f")


def estimate_eps0(B, window, m_s: int = 3, grid_points: int = 40):
    """Low-order estimate of the binding energy with the weight tracking ``eps``.

    The weight parameter equals the trial binding energy at every point, and
    the constrained functional is minimized over ``window``. Returns
    ``(estimate, frozen)`` with ``frozen = freeze_eps0(estimate)``.
    """
    from .bounds import find_local_minima
    from .cdr import Evaluator
    from .weights import last_index

    order = last_index(m_s)

    def value(eps):
        spec = register_problem(QzmSpec(B=B, eps0=format(real(eps), ".30g")))
        # the weight carries eps itself, so only eps > 0 is required here
        spec = ProblemSpec(spec.name, 2, HIERARCHICAL, spec.equation, spec.energy_param, spec.constraint,
                           spec.weight, spec.params, _positive_eps)
        return Evaluator(spec, order, cache=False).value(eps)

    lo, hi = real(window[0]), real(window[1])
    minima = find_local_minima(value, (lo, hi), (hi - lo) / grid_points, refine_tol=mpfr(10) ** -8)
    best = min(minima, key=lambda r: r.value)
    return best.energy, freeze_eps0(best.energy)
