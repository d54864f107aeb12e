import warnings

import pytest
from gmpy2 import mpfr

from oppqbm.bounds import (
    BoundRecord,
    EdgeMinimumWarning,
    MinimaRecord,
    MonotonicityWarning,
    bracket_bounds,
    choose_cap,
    find_local_minima,
    golden_section,
    minima_sequence,
    oppq_am_roots,
    root_tolerance,
)
from oppqbm.cdr import Evaluator
from oppqbm.errors import CapBelowMinimum, InvalidParameter, NeighborCollision, NoMinimumFound
from oppqbm.precision import real, working_precision
from oppqbm.problems import problem_by_name

HARMONIC = problem_by_name("harmonic")
QUARTIC = problem_by_name("quartic")

TABLE1 = {  # order: (minimum, value, lower, upper)
    6: ("4.53222", "3.20587", "4.07088", "5.00593"),
    7: ("4.73661", "3.37132", "4.48590", "5.00591"),
    8: ("4.86462", "3.47875", "4.73214", "5.00585"),
    9: ("4.93802", "3.54002", "4.87312", "5.00572"),
    10: ("4.97454", "3.56996", "4.94437", "5.00541"),
    11: ("4.99037", "3.58276", "4.97612", "5.00479"),
    12: ("4.99656", "3.58773", "4.98933", "5.00384"),
    13: ("4.99882", "3.58954", "4.99489", "5.00276"),
    14: ("4.99961", "3.59017", "4.99741", "5.00181"),
}


def parabola(x):
    return (x - 2) ** 2 + 1


def printed(x, ref):
    """``x`` rounded to as many decimals as the printed entry ``ref``."""
    return format(x, f".{len(ref.split('.')[1])}f")


@pytest.fixture(scope="module")
def harmonic_run():
    with working_precision(60):
        seq = minima_sequence(lambda I: Evaluator(HARMONIC, I), (4, 6), list(range(6, 15)) + [20])
        bounds = [bracket_bounds(Evaluator(HARMONIC, r.order), r, real("3.6")) for r in seq]
    return seq, bounds


# ---------------------------------------------------------------- synthetic

def test_golden_section_quadratic(prec50):
    x, fx = golden_section(parabola, 0, 4, mpfr(10) ** -30)
    assert abs(x - 2) < mpfr(10) ** -20 and abs(fx - 1) < mpfr(10) ** -40


def test_find_minimum_quadratic(prec50):
    (rec,) = find_local_minima(parabola, (0, 4), grid_points=50, refine_tol=mpfr(10) ** -30)
    assert abs(rec.energy - 2) < mpfr(10) ** -20 and abs(rec.value - 1) < mpfr(10) ** -40
    assert not rec.edge and rec.window == (0, 4)


def test_find_minimum_errors(prec50):
    with pytest.raises(NoMinimumFound):
        find_local_minima(lambda x: x, (0, 1), grid_points=10)
    with pytest.raises(InvalidParameter):
        find_local_minima(parabola, (1, 1))
    # decreasing then rising inside the first grid cell: edge candidate plus interior dip
    bumpy = lambda x: (x - real("0.05")) ** 2 if x < real("0.5") else (x - 1) ** 2 + real("0.1")
    with pytest.warns(EdgeMinimumWarning):
        recs = find_local_minima(bumpy, (0, 1), grid_points=10)
    assert recs[0].edge and recs[0].flags == ("edge",)


def test_bracket_quadratic(prec50):
    rec = MinimaRecord(0, real(2), real(1), window=(0, 4))
    b = bracket_bounds(parabola, rec, 2)
    assert isinstance(b, BoundRecord)
    assert abs(b.lower - 1) <= 2 * b.tolerance and abs(b.upper - 3) <= 2 * b.tolerance
    assert b.width > 0


def test_bracket_errors(prec50):
    rec = MinimaRecord(0, real(2), real(1), window=(0, 4))
    with pytest.raises(CapBelowMinimum):
        bracket_bounds(parabola, rec, 1)
    with pytest.raises(NeighborCollision):
        bracket_bounds(parabola, rec, 10)  # window edge reached first
    wavy = lambda x: (x - 2) ** 2 * (x - 4) ** 2 + 1
    with pytest.raises(NeighborCollision):
        bracket_bounds(wavy, MinimaRecord(0, real(2), real(1), window=(0, 6)), 6)


def test_choose_cap(prec50):
    seq = [MinimaRecord(I, real(0), real(v)) for I, v in [(1, "0.5"), (2, "1.0")]]
    assert choose_cap(seq) == real("1.1") or abs(choose_cap(seq) - real("1.1")) < mpfr(10) ** -45
    assert choose_cap(seq, override="3.6") == real("3.6")
    with pytest.raises(CapBelowMinimum):
        choose_cap(seq, override="0.9")
    with pytest.raises(InvalidParameter):
        choose_cap([])
    with pytest.raises(InvalidParameter):
        choose_cap(seq, margin=0)


def test_root_tolerance():
    assert root_tolerance(60) == mpfr(10) ** -30
    assert root_tolerance(40) == mpfr(10) ** -20
    assert root_tolerance(300) == mpfr(10) ** -30


def test_sequence_rejects_bad_orders(prec50):
    with pytest.raises(InvalidParameter):
        minima_sequence(lambda I: parabola, (0, 4), [3, 3])
    with pytest.raises(InvalidParameter):
        minima_sequence(lambda I: parabola, (4, 0), [1])


def test_sequence_singleton_and_monotonicity_flag(prec50):
    (rec,) = minima_sequence(lambda I: parabola, (0, 4), [5])
    assert rec.order == 5 and rec.flags == ()
    with pytest.warns(MonotonicityWarning):
        seq = minima_sequence(lambda I: lambda x: (x - 2) ** 2 + mpfr(1) / I, (0, 4), [1, 2])
    assert "nonmonotone" in seq[1].flags


# ---------------------------------------------------------------- harmonic reproduction

def test_harmonic_table_minima(harmonic_run):
    seq, _ = harmonic_run
    for rec in seq[:-1]:
        E, S, _, _ = TABLE1[rec.order]
        assert printed(rec.energy, E) == E and printed(rec.value, S) == S
    last = seq[-1]
    assert printed(last.energy, "4.9999996") == "4.9999996" and printed(last.value, "3.5904802") == "3.5904802"
    assert all(a.value < b.value for a, b in zip(seq, seq[1:]))
    assert last.value < real("3.5904805")


def test_harmonic_table_bounds(harmonic_run):
    _, bounds = harmonic_run
    for b in bounds[:-1]:
        _, _, lo, hi = TABLE1[b.order]
        assert printed(b.lower, lo) == lo and printed(b.upper, hi) == hi
    assert printed(bounds[-1].lower, "4.99993") == "4.99993"
    assert printed(bounds[-1].upper, "5.00007") == "5.00007"


def test_harmonic_widths_shrink_and_nest(harmonic_run):
    _, bounds = harmonic_run
    widths = [b.width for b in bounds]
    assert all(a > b for a, b in zip(widths, widths[1:]))
    assert all(a.lower <= b.lower and a.upper >= b.upper for a, b in zip(bounds, bounds[1:]))
    assert all(b.lower < 5 < b.upper for b in bounds)


def test_bracket_validity_by_sampling(harmonic_run):
    seq, bounds = harmonic_run
    with working_precision(60):
        for rec, b in zip(seq[:4], bounds[:4]):
            ev = Evaluator(HARMONIC, rec.order)
            for k in range(1, 10):
                inside = b.lower + b.width * k / 10
                assert ev(inside) < b.cap
            for x in (b.lower - b.width / 20, b.upper + b.width / 20):
                assert ev(x) > b.cap


def test_derivative_path_agrees(prec60):
    ev = Evaluator(QUARTIC, 30)
    a = find_local_minima(ev, (22, 23.5), grid_points=30)
    b = find_local_minima(ev, (22, 23.5), grid_points=30, derivative=ev.derivative)
    assert len(a) == len(b) == 1
    assert abs(a[0].energy - b[0].energy) < mpfr(10) ** -10
    assert format(b[0].energy, ".12g") == "22.677422284"


# ---------------------------------------------------------------- OPPQ-AM

@pytest.mark.parametrize("N", [1, 2, 5, 8])
def test_harmonic_am_roots_exact(prec60, N):
    rep = oppq_am_roots(HARMONIC, N)
    assert rep.degree == N and rep.complex_count == 0
    assert len(rep.roots) == N
    for k, r in enumerate(rep.roots):
        assert abs(r - (1 + 4 * k)) < mpfr(10) ** -30


def test_am_rejects_qzm(prec50):
    with pytest.raises(InvalidParameter):
        oppq_am_roots(problem_by_name("qzm", B="1", eps0="0.5"), 5)


def test_quartic_am_roots_near_bound_minima():
    table = ["-3.41014276124", "5.88529385955", "13.5475708449", "22.6363360218"]
    with working_precision(120):
        rep = oppq_am_roots(QUARTIC, 70, window=(-5, 25))
    for t in table:
        assert min(abs(r - real(t)) for r in rep.roots) < mpfr(10) ** -6, t
