"""Quartic oscillator: convergence of a minimum and its bracket.

The functional is evaluated order by order in a window around the eighth
even level near E = 22.6. Each new order reuses the previous minimum as
the centre of a narrow search window, so the sweep stays cheap while the
minimum converges to many digits and the bracket closes around it.

Run with ``python3 demos/quartic_ground_state.py`` (about 15 seconds).
"""
from oppqbm import Evaluator, fmt, problem_by_name, real, working_precision
from oppqbm.bounds import bracket_bounds, choose_cap, minima_sequence

problem = problem_by_name("quartic")

with working_precision(80):
    orders = list(range(30, 101, 10))
    seq = minima_sequence(lambda n: Evaluator(problem, n), (real(20), real(25)), orders,
                          refine_tol="1e-16", track_points=8)
    cap = choose_cap(seq, override=real("0.7"))
    print(f"{'order':>5}  {'minimum':>24}  {'value':>12}  {'lower':>22}  {'upper':>22}")
    for rec in seq:
        b = bracket_bounds(Evaluator(problem, rec.order), rec, cap)
        print(f"{rec.order:>5}  {fmt(rec.energy, 20):>24}  {fmt(rec.value, 10):>12}"
              f"  {fmt(b.lower, 17):>22}  {fmt(b.upper, 17):>22}")
