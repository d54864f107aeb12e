"""Harmonic oscillator on the half line: exact roots and shrinking brackets.

On the half line the harmonic levels sit at E = 1, 5, 9, ... in the units
used by the moment recurrence. The highest projection of the
recurrence vanishes exactly there, so its real roots already contain the
exact levels. The smallest-eigenvalue functional then gives a minimum near
each level together with a bracket that narrows as the order grows.

Run with ``python3 demos/harmonic_bounds.py``.
"""
from oppqbm import Evaluator, fmt, problem_by_name, real, working_precision
from oppqbm.bounds import bracket_bounds, minima_sequence, oppq_am_roots

problem = problem_by_name("harmonic")

with working_precision(50):
    for order in (2, 5, 8):
        report = oppq_am_roots(problem, order)
        print(f"order {order}: projection roots", [fmt(r, 10) for r in report.roots])

    # track the second level through increasing orders
    orders = [6, 8, 10, 12, 14, 20]
    seq = minima_sequence(lambda n: Evaluator(problem, n), (real(4), real(6)), orders)
    cap = real("3.6")  # fixed cap on the functional, as in the reference runs
    print()
    print(f"{'order':>5}  {'minimum':>22}  {'lower':>22}  {'upper':>22}")
    for rec in seq:
        b = bracket_bounds(Evaluator(problem, rec.order), rec, cap)
        print(f"{rec.order:>5}  {fmt(rec.energy, 18):>22}  {fmt(b.lower, 18):>22}  {fmt(b.upper, 18):>22}")
