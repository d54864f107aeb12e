"""Hydrogen in a strong magnetic field: a short run of the 2-D problem.

The two-dimensional moment equations leave one free moment per missing
moment order. Each step of the schedule below enlarges that set and the
basis together, so the minimum of the functional falls monotonically
towards the converged scaled energy while the bracket around it nests.

Run with ``python3 demos/zeeman_smoke.py`` (under a minute; the basis is
rebuilt for every step, so use the CLI with a cache for longer schedules).
"""
from oppqbm import Evaluator, fmt, problem_by_name, real, working_precision
from oppqbm.bounds import bracket_bounds, choose_cap, minima_sequence
from oppqbm.weights import last_index

problem = problem_by_name("qzm", B="2", eps0="1.0")

with working_precision(60):
    orders = [last_index(m) for m in range(3, 9)]
    seq = minima_sequence(lambda n: Evaluator(problem, n), (real("1.001"), real("1.1")), orders,
                          refine_tol="1e-20")
    cap = choose_cap(seq)
    print(f"{'order':>5}  {'minimum':>24}  {'lower':>24}  {'upper':>24}")
    for rec in seq:
        b = bracket_bounds(Evaluator(problem, rec.order), rec, cap)
        print(f"{rec.order:>5}  {fmt(rec.energy, 20):>24}  {fmt(b.lower, 20):>24}  {fmt(b.upper, 20):>24}")
