"""Random small formulas for solver soundness checks."""
from __future__ import annotations

import numpy as np

from paramrobust.expr import Abs, Const, Exp, Formula, Max, Sigmoid, Tanh, Var, evaluate

RELS = ("<=", "<", ">=", ">")


def random_expr(rng: np.random.Generator, names, depth: int):
    if depth == 0 or rng.random() < 0.25:
        if rng.random() < 0.8:
            return Var(names[rng.integers(len(names))])
        return Const(float(np.round(rng.uniform(-2, 2), 3)))
    op = rng.integers(8)
    a = random_expr(rng, names, depth - 1)
    if op == 0:
        return a + random_expr(rng, names, depth - 1)
    if op == 1:
        return a * random_expr(rng, names, depth - 1)
    if op == 2:
        return a - random_expr(rng, names, depth - 1)
    if op == 3:
        return Max(a, random_expr(rng, names, depth - 1))
    if op == 4:
        return Abs(a)
    if op == 5:
        return Exp(Const(0.5) * a)
    if op == 6:
        return Sigmoid(a)
    return Tanh(a)


def random_formula(rng: np.random.Generator, max_vars: int = 4) -> Formula:
    n = int(rng.integers(1, max_vars + 1))
    names = [f"v{i}" for i in range(n)]
    lo = np.round(rng.uniform(-2, 1, n), 2)
    hi = lo + np.round(rng.uniform(0.1, 2, n), 2)
    clauses = []
    for _ in range(int(rng.integers(1, 4))):
        clause = []
        for _ in range(int(rng.integers(1, 3))):
            e = random_expr(rng, names, int(rng.integers(1, 4)))
            # threshold near a sampled value gives a mix of sat and unsat
            pt = dict(zip(names, rng.uniform(lo, hi)))
            c = evaluate(e, pt) + rng.normal(0, 0.5)
            rel = RELS[rng.integers(len(RELS))]
            clause.append(getattr(e, {"<=": "le", "<": "lt", ">=": "ge", ">": "gt"}[rel])(float(np.round(c, 4))))
        clauses.append(tuple(clause))
    return Formula(clauses, list(zip(names, zip(lo, hi))))
