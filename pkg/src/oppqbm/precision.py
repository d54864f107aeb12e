"""Working-precision control and conversions for high-precision scalars.

All hot arithmetic uses :class:`gmpy2.mpfr` (thread-local context); mpmath is
used only for a handful of special functions and root finders, so both
contexts are switched together by :func:`working_precision`.
"""
from __future__ import annotations

import math
from contextlib import contextmanager
from decimal import Decimal
from fractions import Fraction

import gmpy2
import mpmath
import numpy as np
from gmpy2 import mpfr

LOG2_10 = math.log2(10)

#: Digits the tolerance helpers keep in reserve for accumulated rounding.
GUARD_DIGITS = 10


def digits_to_bits(digits: int) -> int:
    return int(math.ceil(digits * LOG2_10)) + 4


def current_bits() -> int:
    return gmpy2.get_context().precision


def current_digits() -> int:
    return int((current_bits() - 4) / LOG2_10)


@contextmanager
def working_precision(digits: int):
    """Run a block with ``digits`` significant decimal digits.

    Sets the gmpy2 context of the current thread and the global mpmath
    precision; both are restored on exit.
    """
    if digits < 1:
        raise ValueError("digits must be positive")
    bits = digits_to_bits(digits)
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        with mpmath.workprec(bits):
            yield


def real(x) -> mpfr:
    """Convert ``x`` to an mpfr at the current precision.

    Strings are parsed as decimals, so ``real("0.1")`` is the correctly
    rounded value rather than the binary double nearest to 0.1.
    """
    if isinstance(x, mpfr):
        return +x if x.precision != current_bits() else x
    if isinstance(x, mpmath.mpf):
        sign, man, exp, _ = x._mpf_
        if not man:
            return mpfr(0)
        value = gmpy2.mul_2exp(gmpy2.mpz(man), exp)
        return -value if sign else value
    if isinstance(x, Fraction):
        return mpfr(x.numerator) / x.denominator
    if isinstance(x, Decimal):
        return mpfr(str(x))
    if isinstance(x, (int, float, str)):
        return mpfr(x)
    if isinstance(x, np.integer):
        return mpfr(int(x))
    raise TypeError(f"cannot convert {type(x).__name__} to mpfr")


def to_mpf(x) -> mpmath.mpf:
    """Exact conversion of an mpfr (or anything :func:`real` accepts) to mpmath."""
    x = x if isinstance(x, mpfr) else real(x)
    if gmpy2.is_zero(x):
        return mpmath.mpf(0)
    man, exp = x.as_mantissa_exp()
    return mpmath.mpf((int(man), int(exp)))


def zeros(shape) -> np.ndarray:
    out = np.empty(shape, dtype=object)
    out.fill(mpfr(0))
    return out


def vector(values) -> np.ndarray:
    values = list(values)
    out = np.empty(len(values), dtype=object)
    for i, v in enumerate(values):
        out[i] = real(v)
    return out


def unit_vector(n: int, k: int) -> np.ndarray:
    out = zeros(n)
    out[k] = mpfr(1)
    return out


def tolerance(digits: int | None = None) -> mpfr:
    """Relative residual tolerance ``10**-(digits - GUARD_DIGITS)``."""
    if digits is None:
        digits = current_digits()
    return mpfr(10) ** -(max(digits - GUARD_DIGITS, 1))


def fmt(x, digits: int | None = None) -> str:
    """Deterministic decimal string with ``digits`` significant digits."""
    if digits is None:
        digits = current_digits()
    x = x if isinstance(x, mpfr) else real(x)
    if gmpy2.is_zero(x):
        return "0"
    return format(x, f".{digits}g")


def log10_abs(x) -> float:
    """log10|x| as a float, without overflow for huge exponents."""
    if gmpy2.is_zero(x):
        return -math.inf
    man, exp = x.as_mantissa_exp()
    man = abs(int(man))
    shift = max(man.bit_length() - 60, 0)
    return math.log10(man >> shift) + (int(exp) + shift) * math.log10(2)


def max_abs(values) -> mpfr:
    best = mpfr(0)
    for v in values:
        a = abs(v)
        if a > best:
            best = a
    return best
