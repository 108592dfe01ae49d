import math

import numpy as np
import pytest

from paramrobust.encoder import OptProblem
from paramrobust.expr import Formula, Var
from paramrobust.fixtures import MLP_DOMAIN, TOY_DOMAIN, load_model
from paramrobust.interval import Box, Interval
from paramrobust.optimizer import (
    estimate_eps_global,
    estimate_eps_local,
    estimate_sigma,
    estimation_config,
    minimize,
)
from paramrobust.oracle import grid_eps, oracle_eps_global

x = Var("x")
TOL = 1e-4


def test_minimize_unconstrained_linear():
    p = OptProblem(x, Formula([], [("x", (2.0, 5.0))]), Interval(2.0, 5.0))
    r = minimize(p, tolerance=TOL)
    assert r.lower <= 2.0 <= r.upper <= 2.0 + TOL
    assert r.witness[0] == pytest.approx(2.0, abs=TOL)


def test_minimize_infeasible():
    p = OptProblem(x, Formula([x.ge(1.0), x.le(0.0)], [("x", (-1.0, 2.0))]), Interval(-1.0, 2.0))
    r = minimize(p)
    assert r.infeasible and r.lower == math.inf


def test_minimize_rejects_bad_tolerance():
    p = OptProblem(x, Formula([], [("x", (0.0, 1.0))]), Interval(0.0, 1.0))
    with pytest.raises(ValueError):
        minimize(p, tolerance=0)


def test_toy_local(toy_scaled):
    e = estimate_eps_local(toy_scaled, None, [1.0], 0.1)
    assert e.converged and e.upper - e.lower <= TOL
    assert e.lower - 1e-4 <= 0.0201091 <= e.upper + 1e-4
    assert abs(e.lower - 0.02011) <= 1e-4 and abs(e.upper - 0.02011) <= 1e-4


def test_toy_global_and_sigma(toy_shifted):
    e = estimate_eps_global(toy_shifted, None, TOY_DOMAIN, 0.1)
    # sup over x of sig(x + 0.1) - sig(x) is tanh(0.025)
    assert e.lower <= math.tanh(0.025) <= e.upper
    above = estimate_sigma(toy_shifted, None, TOY_DOMAIN, 0.1, "above")
    below = estimate_sigma(toy_shifted, None, TOY_DOMAIN, 0.1, "below")
    s = 1 / (1 + math.exp(-0.1)) - 0.5
    for est in (above, below):
        assert est.lower - 1e-9 <= s <= est.upper + 1e-9
    assert abs(above.lower - below.lower) < 2 * TOL


@pytest.mark.parametrize("fn", ["local", "global", "sigma"])
def test_zero_delta(fn, cat, cats_box):
    if fn == "local":
        e = estimate_eps_local(cat, None, [10.0, 3.0], 0.0)
    elif fn == "global":
        e = estimate_eps_global(cat, None, cats_box, 0.0)
    else:
        e = estimate_sigma(cat, None, cats_box, 0.0)
    assert e.lower == 0.0 and e.upper <= TOL


def test_no_flips_gives_zero(toy_scaled):
    # sig(w*x) over x in [0.5, 1]: every label is 1 and stays 1
    e = estimate_sigma(toy_scaled, None, Box([0.5], [1.0]), 0.1)
    assert (e.lower, e.upper) == (0.0, 0.0)


def test_cat_local_against_grid(cat):
    e = estimate_eps_local(cat, None, [0.0, 0.0], 0.01)
    ref = grid_eps(cat, None, [0.0, 0.0], 0.01, resolution=100, max_points=1_000_000)
    assert e.lower - 1e-3 <= ref <= e.upper + 1e-3
    assert ref <= e.upper + 1e-12


@pytest.mark.parametrize("name,dom", [("cat", None), ("mlp_linear", MLP_DOMAIN)])
def test_global_monotone_and_bridge(name, dom, cats_box):
    net = load_model(name)
    dom = dom or cats_box
    eps = [estimate_eps_global(net, None, dom, d) for d in (0.005, 0.01)]
    sig = [estimate_sigma(net, None, dom, d) for d in (0.005, 0.01)]
    assert eps[0].lower <= eps[1].upper + 2 * TOL
    assert sig[0].lower <= sig[1].upper + 2 * TOL
    for s, e in zip(sig, eps):
        assert s.lower <= e.upper + 1e-6


def test_anytime_bounds_bracket_oracle(cat, cats_box):
    tight = estimate_eps_global(cat, None, cats_box, 0.01)
    rough = estimate_eps_global(cat, None, cats_box, 0.01, config=estimation_config(max_splits=3))
    assert not rough.converged
    ref = oracle_eps_global(cat, None, cats_box, 0.01, n_samples=2000, input_points=400).value
    assert rough.lower <= ref <= rough.upper
    assert rough.lower <= tight.upper and tight.lower <= rough.upper


def test_estimate_serialises(toy_scaled):
    e = estimate_eps_local(toy_scaled, None, [1.0], 0.1)
    doc = e.to_dict()
    assert set(doc) == {"lower", "upper", "witness", "splits_used", "converged"}
    assert "p0" in doc["witness"]
    lo, hi = e
    assert lo <= hi
