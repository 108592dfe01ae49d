"""Robustness queries lowered to formulas and optimisation problems.

Each verification formula is the negation of a robustness property: the
property holds exactly when the formula is unsatisfiable.  Variables are
named ``p0..p{n-1}`` (parameters), ``x0..x{d-1}`` (inputs), plus ``eps`` or
``sigma`` for the estimation problems.

Labels follow :func:`paramrobust.network.classify`: label 1 iff the
confidence is at least the decision level.  A label flip between the
reference parameters and a perturbed copy is therefore
``min(f0, f) < level <= max(f0, f)``, written in CNF as
``(f0 < l or f < l) and (f0 >= l or f >= l)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .expr import Abs, Atom, Const, Expr, Formula, Neg, Var, network_to_expr
from .interval import Box, Interval
from .network import Network, ParamVector, flatten, forward, perturb_box, unflatten


class QueryKind(str, Enum):
    LOCAL_EPS = "LocalEps"
    GLOBAL_EPS = "GlobalEps"
    LOCAL_FLIP = "LocalFlip"
    GLOBAL_FLIP = "GlobalFlip"
    SIGMA_FLIP = "SigmaFlip"

    @property
    def is_local(self) -> bool:
        return self in (QueryKind.LOCAL_EPS, QueryKind.LOCAL_FLIP)


SIDES = ("above", "below", "both")


@dataclass(frozen=True, eq=False)
class RobustnessQuery:
    kind: QueryKind
    net: Network
    delta: float
    p0: ParamVector | None = None
    epsilon: float | None = None
    sigma: float | None = None
    x0: np.ndarray | None = None
    domain: Box | None = None
    param_box: Box | None = None

    def __post_init__(self):
        kind = QueryKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.p0 is None:
            object.__setattr__(self, "p0", flatten(self.net))
        if len(self.p0) != self.net.n_params:
            raise ValueError("p0 does not match the network's parameter count")
        if not self.delta >= 0:
            raise ValueError(f"delta must be nonnegative, got {self.delta}")
        if kind in (QueryKind.LOCAL_EPS, QueryKind.GLOBAL_EPS):
            if self.epsilon is None or not self.epsilon >= 0:
                raise ValueError(f"{kind.value} needs epsilon >= 0")
        elif self.epsilon is not None:
            raise ValueError(f"{kind.value} takes no epsilon")
        if kind is QueryKind.SIGMA_FLIP:
            if self.sigma is None or not self.sigma >= 0:
                raise ValueError("SigmaFlip needs sigma >= 0")
        elif self.sigma is not None:
            raise ValueError(f"{kind.value} takes no sigma")
        if kind.is_local:
            if self.x0 is None or self.domain is not None:
                raise ValueError(f"{kind.value} needs x0 and no domain")
            x0 = np.array(self.x0, dtype=float).reshape(-1)
            if x0.size != self.net.input_dim:
                raise ValueError(f"x0 has {x0.size} entries, network expects {self.net.input_dim}")
            x0.flags.writeable = False
            object.__setattr__(self, "x0", x0)
        else:
            if self.domain is None or self.x0 is not None:
                raise ValueError(f"{kind.value} needs a domain and no x0")
            if len(self.domain) != self.net.input_dim or not self.domain.is_finite:
                raise ValueError("domain must be a finite box over the network inputs")
        if self.param_box is not None and len(self.param_box) != self.net.n_params:
            raise ValueError("param_box does not match the parameter count")

    @property
    def level(self) -> float:
        return self.net.level

    @property
    def reference(self) -> Network:
        return unflatten(self.net, self.p0)

    def params_domain(self) -> Box:
        if self.param_box is not None:
            return self.param_box
        return perturb_box(self.p0, self.delta, frozen=self.net.frozen)

    def replace(self, **changes) -> "RobustnessQuery":
        fields = dict(
            kind=self.kind, net=self.net, delta=self.delta, p0=self.p0, epsilon=self.epsilon,
            sigma=self.sigma, x0=self.x0, domain=self.domain, param_box=self.param_box,
        )
        fields.update(changes)
        return RobustnessQuery(**fields)


@dataclass(frozen=True, eq=False)
class OptProblem:
    """Minimise ``objective`` subject to ``constraints``.

    ``value`` names the estimated quantity; its optimum is the negated
    objective optimum.  ``objective_range`` bounds that quantity.
    """

    objective: Expr
    constraints: Formula
    objective_range: Interval
    value: str = "eps"

    def __post_init__(self):
        missing = self.objective.variables() - set(self.constraints.names)
        if missing:
            raise ValueError(f"objective uses undeclared variables {sorted(missing)}")


# -- helpers ---------------------------------------------------------------


def _param_vars(n: int) -> list[Var]:
    return [Var(f"p{i}") for i in range(n)]


def _input_vars(d: int) -> list[Var]:
    return [Var(f"x{i}") for i in range(d)]


def _declare(names: Sequence[str], box: Box) -> list[tuple[str, Interval]]:
    return [(n, Interval(float(a), float(b))) for n, a, b in zip(names, box.lo, box.hi)]


def _perturbed(q: RobustnessQuery, inputs) -> tuple[Expr, list[tuple[str, Interval]]]:
    pv = _param_vars(q.net.n_params)
    f = network_to_expr(q.net, inputs, pv)
    return f, _declare([v.name for v in pv], q.params_domain())


def _reference_expr(q: RobustnessQuery, inputs) -> Expr:
    return network_to_expr(q.net, inputs, q.p0.values.tolist())


def _flip_clauses(f0: Expr, f: Expr, level: float) -> list[tuple[Atom, ...]]:
    lv = Const(level)
    return [(f0.lt(lv), f.lt(lv)), (f0.ge(lv), f.ge(lv))]


def _check_kind(q: RobustnessQuery, kind: QueryKind):
    if q.kind is not kind:
        raise ValueError(f"expected a {kind.value} query, got {q.kind.value}")


# -- verification formulas -------------------------------------------------


def encode_local_eps(q: RobustnessQuery) -> Formula:
    """Exists p in the box with |f_p0(x0) - f_p(x0)| > eps."""
    _check_kind(q, QueryKind.LOCAL_EPS)
    c = forward(q.reference, q.x0)
    f, decl = _perturbed(q, q.x0.tolist())
    return Formula([Abs(Const(c) - f).gt(q.epsilon)], decl)


def encode_global_eps(q: RobustnessQuery) -> Formula:
    """Exists p in the box and x in the domain with |f_p0(x) - f_p(x)| > eps."""
    _check_kind(q, QueryKind.GLOBAL_EPS)
    xs = _input_vars(q.net.input_dim)
    f, decl = _perturbed(q, xs)
    f0 = _reference_expr(q, xs)
    decl += _declare([x.name for x in xs], q.domain)
    return Formula([Abs(f0 - f).gt(q.epsilon)], decl)


def encode_local_flip(q: RobustnessQuery) -> Formula:
    """Exists p in the box whose label at x0 differs from the reference label."""
    _check_kind(q, QueryKind.LOCAL_FLIP)
    c = forward(q.reference, q.x0)
    f, decl = _perturbed(q, q.x0.tolist())
    atom = f.lt(q.level) if c >= q.level else f.ge(q.level)
    return Formula([atom], decl)


def encode_global_flip(q: RobustnessQuery) -> Formula:
    _check_kind(q, QueryKind.GLOBAL_FLIP)
    xs = _input_vars(q.net.input_dim)
    f, decl = _perturbed(q, xs)
    f0 = _reference_expr(q, xs)
    decl += _declare([x.name for x in xs], q.domain)
    return Formula(_flip_clauses(f0, f, q.level), decl)


def encode_sigma_flip(q: RobustnessQuery) -> Formula:
    """Global flip restricted to inputs at least ``sigma`` from the level."""
    _check_kind(q, QueryKind.SIGMA_FLIP)
    xs = _input_vars(q.net.input_dim)
    f, decl = _perturbed(q, xs)
    f0 = _reference_expr(q, xs)
    decl += _declare([x.name for x in xs], q.domain)
    clauses = _flip_clauses(f0, f, q.level) + [(Abs(f0 - q.level).ge(q.sigma),)]
    return Formula(clauses, decl)


ENCODERS = {
    QueryKind.LOCAL_EPS: encode_local_eps,
    QueryKind.GLOBAL_EPS: encode_global_eps,
    QueryKind.LOCAL_FLIP: encode_local_flip,
    QueryKind.GLOBAL_FLIP: encode_global_flip,
    QueryKind.SIGMA_FLIP: encode_sigma_flip,
}


def encode(q: RobustnessQuery) -> Formula:
    return ENCODERS[q.kind](q)


# -- estimation problems ---------------------------------------------------


def _check_delta(delta):
    if not delta >= 0:
        raise ValueError(f"delta must be nonnegative, got {delta}")


def _as_p0(net: Network, p0) -> ParamVector:
    if p0 is None:
        return flatten(net)
    if isinstance(p0, ParamVector):
        return p0
    return flatten(net).with_values(p0)


def opt_local_eps(net: Network, p0, x0, delta: float, eps_max: float = 1.0) -> OptProblem:
    """Maximise the confidence change at x0, posed as minimising -eps."""
    _check_delta(delta)
    if not 0 < eps_max <= 1:
        raise ValueError("eps_max must lie in (0, 1]")
    q = RobustnessQuery(QueryKind.LOCAL_FLIP, net, delta, p0=_as_p0(net, p0), x0=x0)
    c = forward(q.reference, q.x0)
    f, decl = _perturbed(q, q.x0.tolist())
    eps = Var("eps")
    decl.append(("eps", Interval(0.0, float(eps_max))))
    return OptProblem(Neg(eps), Formula([eps.eq(Abs(Const(c) - f))], decl), Interval(0.0, float(eps_max)), "eps")


def opt_global_eps(net: Network, p0, domain: Box, delta: float, eps_max: float = 1.0) -> OptProblem:
    _check_delta(delta)
    if not 0 < eps_max <= 1:
        raise ValueError("eps_max must lie in (0, 1]")
    q = RobustnessQuery(QueryKind.GLOBAL_FLIP, net, delta, p0=_as_p0(net, p0), domain=domain)
    xs = _input_vars(net.input_dim)
    f, decl = _perturbed(q, xs)
    f0 = _reference_expr(q, xs)
    decl += _declare([x.name for x in xs], domain)
    eps = Var("eps")
    decl.append(("eps", Interval(0.0, float(eps_max))))
    return OptProblem(Neg(eps), Formula([eps.eq(Abs(f0 - f))], decl), Interval(0.0, float(eps_max)), "eps")


def default_sigma_max(net: Network) -> float:
    return max(net.level, 1.0 - net.level)


def opt_sigma(net: Network, p0, domain: Box, delta: float, sigma_max: float | None = None,
              side: str = "both") -> OptProblem:
    """Largest reference margin |f_p0(x) - l| among inputs whose label flips.

    ``side='above'`` keeps inputs labelled 1 by the reference network,
    ``'below'`` those labelled 0, ``'both'`` either.
    """
    _check_delta(delta)
    if side not in SIDES:
        raise ValueError(f"side must be one of {SIDES}")
    bound = default_sigma_max(net)
    sigma_max = bound if sigma_max is None else float(sigma_max)
    if not 0 < sigma_max <= bound:
        raise ValueError(f"sigma_max must lie in (0, {bound}]")
    q = RobustnessQuery(QueryKind.GLOBAL_FLIP, net, delta, p0=_as_p0(net, p0), domain=domain)
    xs = _input_vars(net.input_dim)
    f, decl = _perturbed(q, xs)
    f0 = _reference_expr(q, xs)
    decl += _declare([x.name for x in xs], domain)
    sigma = Var("sigma")
    decl.append(("sigma", Interval(0.0, sigma_max)))
    lv = Const(net.level)
    if side == "above":
        clauses = [(f0.ge(lv),), (f.lt(lv),), (sigma.eq(f0 - lv),)]
    elif side == "below":
        clauses = [(f0.lt(lv),), (f.ge(lv),), (sigma.eq(lv - f0),)]
    else:
        clauses = _flip_clauses(f0, f, net.level) + [(sigma.eq(Abs(f0 - lv)),)]
    return OptProblem(Neg(sigma), Formula(clauses, decl), Interval(0.0, sigma_max), "sigma")
